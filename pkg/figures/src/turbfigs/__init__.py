"""Render crosstalk heatmaps, QDER bar charts, and mode galleries.

This package is a pure consumer of the simulator's outputs: it parses the
documented report JSON schema and the .npz field dumps, and draws exactly the
numbers found there.  It computes no physics of its own.
"""

__version__ = "0.1.0"

from .report import Report, ReportParseError, load_report
from .render import FigureSpec, render_heatmaps, render_mode_gallery, render_qder_bars

__all__ = [
    "Report",
    "ReportParseError",
    "load_report",
    "FigureSpec",
    "render_heatmaps",
    "render_qder_bars",
    "render_mode_gallery",
]
