"""Read-only figure and report generation over estimation run artifacts.

These tools never recompute estimation results; they consume the CSV/JSON
files a scenario run leaves behind.
"""

__version__ = "0.1.0"
