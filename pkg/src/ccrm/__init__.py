"""Criminal cocaine replacement model: simulation, scoring and calibration."""

__version__ = "0.1.0"
