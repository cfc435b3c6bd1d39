"""Image-folder to embedding-file bridge for the gcdlib engine."""

__version__ = "0.1.0"
