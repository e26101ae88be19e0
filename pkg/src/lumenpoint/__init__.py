"""Point-cloud based lighting estimation: RGB-D to point cloud to SH lighting."""

__version__ = "0.1.0"
