"""Dynamic graph convolutional networks with exact gradients."""
__version__ = "0.1.0"
