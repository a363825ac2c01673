"""Turn CSV tables into figures.

This package draws; it never prices.  Every number that appears in a
figure was read out of the input CSV, so regenerating a plot can never
silently change the underlying results.
"""

from .render import KINDS, FigureJob, fit_series, load_jobs, pivot_grid, render

__all__ = [
    "KINDS",
    "FigureJob",
    "fit_series",
    "load_jobs",
    "pivot_grid",
    "render",
]

__version__ = "0.1.0"
