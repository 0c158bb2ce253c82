"""Engine-independent fiducial localization and weather visualization."""

__version__ = "0.1.0"
