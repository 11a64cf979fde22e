"""Rate regions for quantum multiple-access channels with measurement-generated classical feedback."""

__version__ = "0.1.0"
