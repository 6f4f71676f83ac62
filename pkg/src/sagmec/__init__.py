"""Joint offloading, sub-band, power and UAV placement optimizer for space-air-ground MEC networks."""

__version__ = "0.1.0"
