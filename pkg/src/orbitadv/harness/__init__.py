"""Configuration, seeding, persistence and the command line front end."""
