"""Per-shot bitrate and quality ladder prediction from source-video features."""

__version__ = "0.1.0"
