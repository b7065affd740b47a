"""Semantic layer over relational data: typed analytic plans, SQL compilation
with implicit joins, question-space enumeration, and natural-language rendering."""

__version__ = "0.1.0"
