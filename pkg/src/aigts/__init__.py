"""Activity recognition from app-usage logs by entropy-minimising temporal
segmentation, and regression of self-reported affect."""

__version__ = "0.1.0"
