"""Joint morphological tagging and lemmatization toolkit."""

__version__ = "0.1.0"
