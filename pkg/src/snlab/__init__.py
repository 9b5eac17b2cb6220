"""Time-dependent Schrodinger-Newton equations in three symmetry classes."""

__version__ = "0.1.0"
