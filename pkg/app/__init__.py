"""hierkrig application package."""

__version__ = "1.0.0"
__description__ = "Kriging-based optimization in hierarchical search spaces"
