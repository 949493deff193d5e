"""deblurlab: synthetic blur generation and adversarial restoration, desk scale."""

__version__ = "0.1.0"
