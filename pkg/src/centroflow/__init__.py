"""Numerical laboratory for p-centro-affine curvature flows of symmetric convex curves."""

__version__ = "0.1.0"

from .body import SupportBody  # noqa: E402
from .field import PeriodicField  # noqa: E402
from .flow import FlowSpec, FlowState, Trajectory, run, step  # noqa: E402

__all__ = ["PeriodicField", "SupportBody", "FlowSpec", "FlowState", "Trajectory", "run", "step"]
