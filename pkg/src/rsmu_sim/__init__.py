"""Deterministic simulator for roadside management units sharing a highway view with vehicles."""

__version__ = "0.1.0"
