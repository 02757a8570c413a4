"""Energy-based inlier pseudo-labeling for imbalanced semi-supervised learning."""

__version__ = "0.1.0"
