"""Convert raw report text and sentence labels into research-engine inputs."""

__version__ = "0.1.0"
