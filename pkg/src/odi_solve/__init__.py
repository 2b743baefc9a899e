"""Multiplicity of solutions for Sturm-Liouville differential inclusions."""

__version__ = "0.1.0"
