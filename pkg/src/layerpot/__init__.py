"""Double layer potentials of constant-coefficient elliptic operators on C^{1,1} boundaries."""

__version__ = "0.1.0"
