"""Return-curve rendering for jointq run logs."""

from curveplot.render import CurveSpec, SchemaError, build_figure, moving_average, render

__all__ = ["CurveSpec", "SchemaError", "build_figure", "moving_average", "render"]
