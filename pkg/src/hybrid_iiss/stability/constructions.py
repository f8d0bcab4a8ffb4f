"""Constructive transformations between stability notions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..comparison import (FnClass, KLFn, ScalarComparisonFn, compose, inverse, require_class,
                          scale)
from ..expr import Opaque, Var
from ..sampling import random_schedule
from ..simulator import SimOptions, simulate
from ..system import HybridSystem
from .energy import energy_profile

__all__ = ["OrderingError", "derive_ubebs_from_a", "ConstructedBeta", "construct_0ugas_beta",
           "V2Estimate", "empirical_V2"]


class OrderingError(ValueError):
    """Raised when the local/practical gates do not satisfy ``l > p``."""


def derive_ubebs_from_a(alpha1, alpha2, alpha3, validate: bool = True):
    """From ``a1(w) <= a2(w0) + a3(E)`` to ``alpha(w) <= kappa(w0) + E``.

    ``alpha = a3^-1(a1 / 2)`` and ``kappa = a3^-1 o a2``.  Since
    ``(a + b) / 2 <= max(a, b)``, applying ``a3^-1`` gives
    ``alpha(w) <= max(kappa(w0), E)``.
    """
    if validate:
        for fn, name in ((alpha1, "alpha1"), (alpha2, "alpha2"), (alpha3, "alpha3")):
            require_class(fn, FnClass.KINF, name)
    inv3 = inverse(ScalarComparisonFn(alpha3.expr, FnClass.KINF, alpha3.var))
    alpha = compose(inv3, scale(0.5, alpha1))
    kappa = compose(inv3, alpha2)
    return (ScalarComparisonFn(alpha.expr, FnClass.KINF),
            ScalarComparisonFn(kappa.expr, FnClass.KINF))


# ---------------------------------------------------------------------------
# local + practical  =>  0-UGAS

def _first_hit(bt1: KLFn, s: np.ndarray, level: float) -> np.ndarray:
    """Smallest ``T`` with ``bt1(s, T) = level`` (0 if already below), by bisection."""
    s = np.asarray(s, dtype=float).reshape(-1)
    out = np.zeros(s.size)
    active = np.nonzero(np.asarray(bt1(s, 0.0), dtype=float) > level)[0]
    if not active.size:
        return out
    ss = s[active]
    lo = np.zeros(ss.size)
    hi = np.ones(ss.size)
    for _ in range(64):
        above = np.asarray(bt1(ss, hi), dtype=float) > level
        if not np.any(above):
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2.0 * hi, hi)
    else:
        raise ValueError("bt1(s, .) does not reach l - p before t = 2^64")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        moving = (mid > lo) & (mid < hi)
        if not np.any(moving):
            break
        above = np.asarray(bt1(ss, mid), dtype=float) > level
        lo = np.where(moving & above, mid, lo)
        hi = np.where(moving & ~above, mid, hi)
    out[active] = hi
    return out


@dataclass(frozen=True, eq=False)
class ConstructedBeta(KLFn):
    """The piecewise envelope built from local and practical iISS bounds.

    With ``T*(s)`` the first time ``bt1(s, .)`` reaches ``l - p``::

        (bt2(l, 0) / l) * (bt1(s, t) + p) + 1/t      for t < T*(s)
        bt2(l, max(t - T*(s) - 1, 0)) + 1/t          for t >= T*(s)

    Infinite at ``t = 0``.
    """

    bt1: KLFn = None
    bt2: KLFn = None
    l: float = 0.0
    p: float = 0.0

    def t_star(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = _first_hit(self.bt1, s_arr, self.l - self.p).reshape(s_arr.shape)
        return out if out.ndim else float(out)

    def branch_values(self, s):
        """Lower-branch limit and upper-branch value at ``t = T*(s)``."""
        s = np.asarray(s, dtype=float)
        ts = np.asarray(self.t_star(s), dtype=float)
        with np.errstate(divide="ignore"):
            inv = 1.0 / ts
        coef = float(self.bt2(self.l, 0.0)) / self.l
        left = coef * (np.asarray(self.bt1(s, ts), dtype=float) + self.p) + inv
        right = np.asarray(self.bt2(self.l, np.zeros_like(ts)), dtype=float) + inv
        return left, right


def construct_0ugas_beta(bt1: KLFn, p: float, bt2: KLFn, l: float) -> ConstructedBeta:
    """0-UGAS envelope from a ``p``-practical bound ``bt1`` and an ``l``-local bound ``bt2``."""
    if not p >= 0:
        raise ValueError(f"p must be nonnegative, got {p}")
    if not l > p:
        raise OrderingError(f"the construction needs l > p (got l={l}, p={p})")
    coef = float(bt2(l, 0.0)) / l
    holder: dict = {}

    def envelope(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        flat_s = s.reshape(-1)
        uniq, inv_idx = np.unique(flat_s, return_inverse=True)
        ts = holder["beta"].t_star(uniq)[inv_idx].reshape(s.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = 1.0 / t
            lower = coef * (np.asarray(bt1(s, t), dtype=float) + p) + tail
            upper = np.asarray(bt2(l, np.maximum(t - ts - 1.0, 0.0)), dtype=float) + tail
        return np.where(t < ts, lower, upper)

    label = f"beta_0ugas[{bt1.text()}; {bt2.text()}; l={l:g}; p={p:g}]"
    node = Opaque(label, envelope, (Var("s"), Var("t")))
    beta = ConstructedBeta(node, True, bt1, bt2, float(l), float(p))
    holder["beta"] = beta
    return beta


# ---------------------------------------------------------------------------
# sampled V2

@dataclass
class V2Estimate:
    value: float
    witness: dict
    budget: int
    candidates: list = field(default_factory=list)


def empirical_V2(sys: HybridSystem, alpha: ScalarComparisonFn, gamma: ScalarComparisonFn, x0,
                 budget: int, horizon_T: float = 1.0, seed: int = 0, level_lo=-1.0,
                 level_hi=1.0, switches=(0, 3), opts: SimOptions | None = None) -> V2Estimate:
    """Sampled lower bound on ``sup { alpha(w(x(t,j))) - ||u||^gamma_(t,j) }``.

    Trial ``i`` draws a random piecewise-constant input from
    ``default_rng(seed + i)``.  The value is never below the ``u = 0``,
    ``(t, j) = (0, 0)`` candidate ``alpha(w(x0))``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    opts = opts or SimOptions(step=1e-2, horizon_T=horizon_T)
    ind = sys.indicator
    x0 = np.asarray(x0, dtype=float).reshape(sys.n)
    best = float(alpha(ind(x0)))
    witness = {"trial": -1, "t": 0.0, "j": 0, "value": best, "schedule": None}
    candidates = [best]
    for i in range(budget):
        rng = np.random.default_rng(seed + i)
        sched = random_schedule(rng, sys.m, level_lo, level_hi, switches, opts.horizon_T,
                                n_jumps=min(opts.horizon_J, 16) if sys.m else 0)
        sol = simulate(sys, x0, sched, opts)
        t, j, x = sol.arc.samples()
        vals = np.asarray(alpha(ind(x)), dtype=float) - energy_profile(sol.input, gamma, t, j)
        k = int(np.argmax(vals))
        candidates.append(float(vals[k]))
        if vals[k] > best:
            best = float(vals[k])
            witness = {"trial": i, "t": float(t[k]), "j": int(j[k]), "value": best,
                       "schedule": sched.to_dict()}
    return V2Estimate(best, witness, budget, candidates)
