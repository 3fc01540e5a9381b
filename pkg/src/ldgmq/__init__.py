"""LDGM quantization codes for MSE quantization of a uniform source."""

__version__ = "0.1.0"
