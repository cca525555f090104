"""Cancer-specific age-at-onset penetrance from ascertained family data."""

__version__ = "0.1.0"
