"""CSV-and-manifest driven figure rendering for heatctrl study outputs."""

__version__ = "0.1.0"
