"""stormerplots: paper-style figures from stormerlab output files."""

__version__ = "0.1.0"
