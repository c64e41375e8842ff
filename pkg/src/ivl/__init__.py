"""Invariance complexity and equi-invariance classification for discrete-time control systems."""

from .core import ControlSchedule, ControlSystem, Scalar, SymbolicPoint, splice
from .examples import ExampleId, build_example

__version__ = "0.1.0"

__all__ = ["ControlSchedule", "ControlSystem", "ExampleId", "Scalar", "SymbolicPoint", "build_example", "splice"]
