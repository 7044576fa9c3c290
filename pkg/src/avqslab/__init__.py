"""Workbench for entanglement distillation and state merging of compound and arbitrarily varying quantum sources."""
__version__ = "0.1.0"
