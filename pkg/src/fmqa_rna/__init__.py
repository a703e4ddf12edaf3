"""FMQA black-box optimization for RNA inverse folding."""
__version__ = "0.1.0"
