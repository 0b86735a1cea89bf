"""Workbench for rainbow cylindric atom structures, network games and blow-up-and-blur constructions."""

__version__ = "0.1.0"
