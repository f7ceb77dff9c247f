"""Random walks by isometries of compact spaces: exact and sampled experiments."""

__version__ = "0.1.0"
