"""Declarative configuration-security checks for distributed system components."""

__version__ = "0.1.0"

ENGINE = f"confcheck/{__version__}"
