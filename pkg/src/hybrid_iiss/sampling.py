"""Random piecewise-constant inputs."""
from __future__ import annotations

import numpy as np

from .hybrid_time import InputSchedule

__all__ = ["random_schedule"]


def random_schedule(rng: np.random.Generator, m: int, level_lo, level_hi, switches=(0, 3),
                    horizon_T: float = 10.0, n_jumps: int = 0) -> InputSchedule:
    """Uniform levels in the box, uniform switch times in ``(0, horizon_T)``.

    The switch count is drawn uniformly from the inclusive range ``switches``.
    ``n_jumps`` explicit jump values are drawn from the same box.
    """
    lo = np.broadcast_to(np.asarray(level_lo, dtype=float), (m,))
    hi = np.broadcast_to(np.asarray(level_hi, dtype=float), (m,))
    k = int(rng.integers(switches[0], switches[1] + 1))
    breaks = np.unique(rng.uniform(0.0, horizon_T, k)) if k else np.empty(0)
    breaks = breaks[breaks > 0.0]
    levels = rng.uniform(lo, hi, (breaks.size + 1, m))
    jumps = rng.uniform(lo, hi, (n_jumps, m)) if n_jumps else None
    return InputSchedule(breaks, levels, jumps)
