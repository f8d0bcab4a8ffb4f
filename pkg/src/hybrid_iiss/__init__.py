"""Simulation and numerical checking of stability estimates for hybrid systems."""
from ._accel import NUMBA_ENABLED

__version__ = "0.1.0"
__all__ = ["NUMBA_ENABLED", "__version__"]
