"""Small labelled-table toolkit."""

from .frame import Frame, concat, read_csv

__all__ = ["Frame", "concat", "read_csv"]
