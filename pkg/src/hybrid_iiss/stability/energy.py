"""Hybrid input energy ``||u||^gamma_(t,j)``.

Flow part: ``int_0^t gamma(|u(s, i(s))|) ds``, exact on piecewise-constant
inputs.  Jump part: ``gamma(|u(t', j')|)`` summed over the jump times
``(t', j')`` with ``t' + j' <= t + j``.  For a point ``(t, j)`` of the
domain those are the jumps ``j' < j`` plus jump ``j`` itself when ``t`` is
its jump time.
"""
from __future__ import annotations

import numpy as np

from ..comparison import ScalarComparisonFn
from ..hybrid_time import DomainError, HybridInput

__all__ = ["energy", "energy_profile", "completed_energy_profile", "input_norms"]


def input_norms(levels: np.ndarray) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        return np.abs(levels)
    return np.sqrt(np.einsum("ij,ij->i", levels, levels))


def _phase_tables(u: HybridInput, gamma):
    cums, rates = [], []
    for b, lv in zip(u.breaks, u.levels):
        g = np.asarray(gamma(input_norms(lv)), dtype=float).reshape(-1)
        cums.append(np.concatenate([[0.0], np.cumsum(g * np.diff(b))]))
        rates.append(g)
    jumps = np.asarray(gamma(input_norms(u.jump_values)), dtype=float).reshape(-1) \
        if u.jump_values.shape[0] else np.zeros(0)
    return cums, rates, jumps


def _profile(u: HybridInput, gamma, t, j, include_current_jump: bool):
    t = np.asarray(t, dtype=float).reshape(-1)
    j = np.asarray(j, dtype=np.int64).reshape(-1)
    cums, rates, jumps = _phase_tables(u, gamma)
    flow_before = np.concatenate([[0.0], np.cumsum([c[-1] for c in cums])])
    jump_before = np.concatenate([[0.0], np.cumsum(jumps)])
    out = np.empty(t.size)
    last = u.domain.n_phases - 1
    for jj in np.unique(j):
        sel = np.nonzero(j == jj)[0]
        b = u.breaks[jj]
        k = np.clip(np.searchsorted(b, t[sel], side="right") - 1, 0, b.size - 2)
        partial = cums[jj][k] + rates[jj][k] * (t[sel] - b[k])
        # the last piece ends exactly at the phase end
        partial = np.where(t[sel] >= b[-1], cums[jj][-1], partial)
        val = flow_before[jj] + partial + jump_before[jj]
        if include_current_jump and jj < last:
            val = val + np.where(t[sel] == u.domain.phases[jj][1], jumps[jj], 0.0)
        out[sel] = val
    return out


def energy_profile(u: HybridInput, gamma: ScalarComparisonFn, t, j) -> np.ndarray:
    """``||u||^gamma`` at many domain points at once (no domain check)."""
    return _profile(u, gamma, t, j, include_current_jump=True)


def completed_energy_profile(u: HybridInput, gamma, t, j) -> np.ndarray:
    """Like :func:`energy_profile` but counting only jumps already taken (``j' < j``)."""
    return _profile(u, gamma, t, j, include_current_jump=False)


def energy(u: HybridInput, gamma: ScalarComparisonFn, upto) -> float:
    """``||u||^gamma_(t,j)`` at one point of ``dom u``."""
    t, j = float(upto[0]), upto[1]
    if j != int(j) or not u.domain.contains((t, int(j))):
        raise DomainError(f"({t}, {j}) is not in the input's domain")
    return float(energy_profile(u, gamma, [t], [int(j)])[0])
