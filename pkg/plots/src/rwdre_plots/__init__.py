"""Figure rendering for rwdre simulation outputs."""

from .render import KINDS, FigureSpec, RenderResult, SchemaError, render

__version__ = "0.1.0"
