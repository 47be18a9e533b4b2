"""Neural tangent kernel analysis and training for hard-constraint PINNs."""

__version__ = "0.1.0"
