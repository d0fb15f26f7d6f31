"""Two-stage block/architecture search for deep graph neural networks."""

__version__ = "0.1.0"
