"""Render exported model-diagnostic CSVs into publication-style figures.

The renderers never recompute statistics: they plot exactly the numbers the
modelling pipeline exported (the one exception is the ROC area annotation,
which is the trapezoid rule applied to the plotted points themselves).
"""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, FigureJob, render

__all__ = ["FIGURE_KINDS", "FigureJob", "render", "__version__"]
