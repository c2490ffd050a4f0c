"""Planning on factored beliefs over ground atoms."""

__version__ = "0.1.0"
