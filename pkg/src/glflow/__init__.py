"""Periodic-box laboratory for the parabolic Ginzburg-Landau equation."""

from .grid import ComplexField, GridSpec
from .integrator import StepperConfig, evolve_to, step

__all__ = ["ComplexField", "GridSpec", "StepperConfig", "evolve_to", "step"]
__version__ = "0.1.0"
