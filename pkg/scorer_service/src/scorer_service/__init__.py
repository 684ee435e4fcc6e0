"""Reference-based text-quality scorer served over HTTP."""

__version__ = "0.1.0"
