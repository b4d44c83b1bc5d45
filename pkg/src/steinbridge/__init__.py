"""Joint training of an implicit generator and an explicit energy model coupled by Stein discrepancies."""

__version__ = "0.1.0"
