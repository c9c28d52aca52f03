"""Standard view plane localization in 4D (3D+time) grayscale volumes."""

__version__ = "0.1.0"
