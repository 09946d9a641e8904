"""Lattice SIR epidemic with random-walk particles, block couplings and the SSP model."""
from .engine import EngineConfig, TrajectoryReport, run_trajectory
from .lattice import RngStream, Window
from .serialization import SCHEMA_VERSION

__version__ = "0.1.0"

__all__ = ["EngineConfig", "TrajectoryReport", "run_trajectory", "RngStream", "Window", "SCHEMA_VERSION"]
