"""Adversarial perturbations on SO(d) orbits of random convolutional networks."""

__version__ = "0.1.0"
