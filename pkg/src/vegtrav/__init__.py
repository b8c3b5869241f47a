"""Spectral-LiDAR traversability: vegetation segmentation, mass-density maps, velocity-loss path costs."""

__version__ = "0.1.0"
