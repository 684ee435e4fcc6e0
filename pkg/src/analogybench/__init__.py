"""Desk-scale harness for generating and evaluating LLM-produced analogies."""

__version__ = "0.1.0"
