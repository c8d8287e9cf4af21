"""Model-level interpretation of graph classifiers via policy-gradient graph generation."""

__version__ = "0.1.0"
