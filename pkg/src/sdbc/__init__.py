"""Neuroevolution for collective robotics with novelty search over
systematically derived behaviour characterisations."""

__version__ = "0.1.0"
