"""Stability estimates checked sample by sample along solution pairs.

Every check returns a :class:`CheckReport` with ``residual = lhs - rhs``;
an estimate is violated when some residual exceeds ``tol``.  Bounds that
evaluate to ``+inf`` (envelopes carrying ``s/t`` or ``1/t``) are skipped
and counted in ``n_skipped``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..comparison import (ClassValidationError, FnClass, KLFn, KLLFn, ScalarComparisonFn,
                          kl_to_kll, require_class, validate_kll)
from ..simulator import SolutionPair
from ..system import HybridSystem
from .energy import completed_energy_profile, energy_profile, input_norms
from .report import DEFAULT_CHECK_TOL, CheckReport

__all__ = [
    "NonzeroInputError", "GradientError", "GridSpec", "check_iiss", "check_0ugas",
    "check_ubebs", "check_ubebs_alpha123", "check_local_iiss", "check_practical_iiss",
    "check_traj_dissipation", "check_pointwise_dissipation",
]


class NonzeroInputError(ValueError):
    pass


class GradientError(ValueError):
    pass


def _batch(sols) -> list:
    if isinstance(sols, SolutionPair):
        return [sols]
    return list(sols)


def _text(obj) -> str:
    return obj.text() if hasattr(obj, "text") else repr(obj)


def _need(fn, cls: FnClass, name: str, validate: bool):
    if validate:
        require_class(fn, cls, name)
    return fn


def _as_kll(beta, validate: bool) -> KLLFn:
    if isinstance(beta, KLFn):
        beta = kl_to_kll(beta)
    if not isinstance(beta, KLLFn):
        raise TypeError(f"beta must be a KLFn or KLLFn, got {type(beta).__name__}")
    if validate and not beta.extended:
        report = validate_kll(beta)
        if not report.passed:
            raise ClassValidationError(f"beta is not class KLL: {report}", report)
    return beta


def _traj(sol: SolutionPair, omega):
    t, j, x, u = sol.samples()
    w = np.asarray(omega(x), dtype=float)
    w0 = float(omega(sol.x0))
    return t, j, x, u, w, w0


def _collect(kind, params, parts, tol, extra=None) -> CheckReport:
    if parts:
        cols = [np.concatenate([p[k] for p in parts]) for k in range(5)]
        streams = np.concatenate([p[5] for p in parts]) if len(parts[0]) > 5 else "estimate"
    else:
        cols = [np.zeros(0)] * 5
        streams = "estimate"
    skipped = (extra or {}).pop("_skipped", 0)
    return CheckReport.build(kind, params, cols[0], cols[1], cols[2], cols[3], cols[4],
                             stream=streams, check_tol=tol, n_skipped=skipped, extra=extra)


def _finite_rhs(t, j, lhs, rhs, k):
    keep = np.isfinite(rhs)
    return (t[keep], j[keep], lhs[keep], rhs[keep], np.full(int(keep.sum()), k)), \
        int((~keep).sum())


# ---------------------------------------------------------------------------
# iISS family

def check_iiss(sols, beta, chi: ScalarComparisonFn, gamma: ScalarComparisonFn, omega,
               tol: float = DEFAULT_CHECK_TOL, p: float = 0.0, validate: bool = True,
               kind: str = "iISS") -> CheckReport:
    """``omega(x(t,j)) <= beta(omega(x0), t, j) + chi(||u||^gamma_(t,j)) + p``."""
    if p < 0:
        raise ValueError(f"p must be nonnegative, got {p}")
    beta = _as_kll(beta, validate)
    _need(chi, FnClass.KINF, "chi", validate)
    _need(gamma, FnClass.K, "gamma", validate)
    parts, skipped = [], 0
    for k, sol in enumerate(_batch(sols)):
        t, j, _, _, w, w0 = _traj(sol, omega)
        e = energy_profile(sol.input, gamma, t, j)
        rhs = np.asarray(beta(w0, t, j), dtype=float) + np.asarray(chi(e), dtype=float) + p
        part, sk = _finite_rhs(t, j, w, rhs, k)
        parts.append(part)
        skipped += sk
    params = {"beta": beta.text(), "chi": chi.text(), "gamma": gamma.text()}
    if kind != "iISS":
        params["p"] = p
    return _collect(kind, params, parts, tol, {"_skipped": skipped})


def check_practical_iiss(sols, beta, chi, gamma, p: float, omega,
                         tol: float = DEFAULT_CHECK_TOL, validate: bool = True) -> CheckReport:
    """iISS estimate with the additive offset ``p``; ``p = 0`` is exactly :func:`check_iiss`."""
    return check_iiss(sols, beta, chi, gamma, omega, tol, p=p, validate=validate,
                      kind="practical_iISS")


def check_0ugas(sols, beta, omega, tol: float = DEFAULT_CHECK_TOL,
                validate: bool = True) -> CheckReport:
    """``omega(x(t,j)) <= beta(omega(x0), t, j)`` over zero-input solutions."""
    beta = _as_kll(beta, validate)
    sols = _batch(sols)
    for k, sol in enumerate(sols):
        if not sol.input.is_zero():
            raise NonzeroInputError(f"solution {k} has a nonzero input")
    parts, skipped = [], 0
    for k, sol in enumerate(sols):
        t, j, _, _, w, w0 = _traj(sol, omega)
        part, sk = _finite_rhs(t, j, w, np.asarray(beta(w0, t, j), dtype=float), k)
        parts.append(part)
        skipped += sk
    extra = {"_skipped": skipped, "n_trajectories": len(sols)}
    return _collect("zero_UGAS", {"beta": beta.text()}, parts, tol, extra)


def check_ubebs(sols, alpha, kappa, gamma, c: float, omega, tol: float = DEFAULT_CHECK_TOL,
                validate: bool = True) -> CheckReport:
    """``alpha(omega(x)) <= kappa(omega(x0)) + ||u||^gamma + c``."""
    if c < 0:
        raise ValueError(f"c must be nonnegative, got {c}")
    _need(alpha, FnClass.KINF, "alpha", validate)
    _need(kappa, FnClass.KINF, "kappa", validate)
    _need(gamma, FnClass.K, "gamma", validate)
    parts = []
    for k, sol in enumerate(_batch(sols)):
        t, j, _, _, w, w0 = _traj(sol, omega)
        e = energy_profile(sol.input, gamma, t, j)
        lhs = np.asarray(alpha(w), dtype=float)
        rhs = float(kappa(w0)) + e + c
        parts.append((t, j, lhs, rhs, np.full(t.size, k)))
    params = {"alpha": _text(alpha), "kappa": _text(kappa), "gamma": _text(gamma), "c": c}
    return _collect("UBEBS" if c else "UBEBS_c0", params, parts, tol)


def check_ubebs_alpha123(sols, alpha1, alpha2, alpha3, gamma_hat, omega,
                         tol: float = DEFAULT_CHECK_TOL, validate: bool = True) -> CheckReport:
    """``alpha1(omega(x)) <= alpha2(omega(x0)) + alpha3(||u||^gamma_hat)``."""
    for fn, name in ((alpha1, "alpha1"), (alpha2, "alpha2"), (alpha3, "alpha3")):
        _need(fn, FnClass.KINF, name, validate)
    _need(gamma_hat, FnClass.K, "gamma_hat", validate)
    parts = []
    for k, sol in enumerate(_batch(sols)):
        t, j, _, _, w, w0 = _traj(sol, omega)
        e = energy_profile(sol.input, gamma_hat, t, j)
        lhs = np.asarray(alpha1(w), dtype=float)
        rhs = float(alpha2(w0)) + np.asarray(alpha3(e), dtype=float)
        parts.append((t, j, lhs, rhs, np.full(t.size, k)))
    params = {"alpha1": _text(alpha1), "alpha2": _text(alpha2), "alpha3": _text(alpha3),
              "gamma_hat": _text(gamma_hat)}
    return _collect("UBEBS_alpha123", params, parts, tol)


def check_local_iiss(sols, beta, chi, gamma, l: float, omega, tol: float = DEFAULT_CHECK_TOL,
                     validate: bool = True) -> CheckReport:
    """iISS estimate on the gated solutions: ``omega(x0) <= l`` and energy ``<= l`` throughout.

    Solutions outside the gate are dropped and counted in ``out_of_gate``.
    """
    if not l > 0:
        raise ValueError(f"l must be positive, got {l}")
    sols = _batch(sols)
    gated, out_idx = [], []
    for k, sol in enumerate(sols):
        t, j, _ = sol.arc.samples()
        e_max = float(np.max(energy_profile(sol.input, gamma, t, j)))
        if float(omega(sol.x0)) > l or e_max > l:
            out_idx.append(k)
        else:
            gated.append(k)
    rep = check_iiss([sols[k] for k in gated], beta, chi, gamma, omega, tol,
                     validate=validate, kind="local_iISS")
    rep.traj = np.asarray(gated, dtype=np.int64)[rep.traj] if gated else rep.traj
    rep.parameters["l"] = l
    rep.extra.update({"in_gate": len(gated), "out_of_gate": len(out_idx),
                      "out_of_gate_indices": out_idx})
    return rep


# ---------------------------------------------------------------------------
# dissipation

def _cumtrapz(t, y):
    out = np.zeros_like(y)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def check_traj_dissipation(sols, V: Callable, alpha1_bar, alpha2_bar, rho, gamma_bar, omega,
                           tol: float = DEFAULT_CHECK_TOL, validate: bool = True) -> CheckReport:
    """Sandwich and accumulated decrease of ``V`` along trajectories.

    Stream ``sandwich``: ``max(a1(w) - V, V - a2(w))``.
    Stream ``accumulation``: ``V(x(t,j)) - V(x0) + int rho(w) + sum rho(w)
    - ||u||^gamma_bar``, where the integral is a trapezoid over stored
    samples and both jump sums run over the jumps already taken.
    """
    _need(alpha1_bar, FnClass.KINF, "alpha1_bar", validate)
    _need(alpha2_bar, FnClass.KINF, "alpha2_bar", validate)
    _need(rho, FnClass.PD, "rho", validate)
    _need(gamma_bar, FnClass.K, "gamma_bar", validate)
    parts = []
    for k, sol in enumerate(_batch(sols)):
        t, j, x, _, w, _ = _traj(sol, omega)
        v = np.asarray(V(x), dtype=float)
        zero = np.zeros(t.size)
        sand = np.maximum(np.asarray(alpha1_bar(w)) - v, v - np.asarray(alpha2_bar(w)))
        parts.append((t, j, sand, zero, np.full(t.size, k),
                      np.full(t.size, "sandwich")))
        r = np.asarray(rho(w), dtype=float)
        acc_int = np.zeros(t.size)
        acc_jump = np.zeros(t.size)
        offset_int, offset_jump = 0.0, 0.0
        for jj in range(sol.domain.n_phases):
            sel = np.nonzero(j == jj)[0]
            acc_int[sel] = offset_int + _cumtrapz(t[sel], r[sel])
            acc_jump[sel] = offset_jump
            offset_int = acc_int[sel[-1]]
            offset_jump += r[sel[-1]]
        e = completed_energy_profile(sol.input, gamma_bar, t, j)
        lhs = v - v[0] + acc_int + acc_jump
        parts.append((t, j, lhs, e, np.full(t.size, k),
                      np.full(t.size, "accumulation")))
    params = {"V": _text(V), "alpha1_bar": _text(alpha1_bar), "alpha2_bar": _text(alpha2_bar),
              "rho": _text(rho), "gamma_bar": _text(gamma_bar)}
    return _collect("traj_dissipation", params, parts, tol)


@dataclass(frozen=True)
class GridSpec:
    """Cartesian grid: one ``(lo, hi, num)`` triple per state and input coordinate."""

    x_ranges: tuple
    u_ranges: tuple = ()

    def points(self):
        axes = [np.linspace(lo, hi, int(num)) for lo, hi, num in (*self.x_ranges, *self.u_ranges)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
        n = len(self.x_ranges)
        return flat[:, :n], flat[:, n:]


def _fd_gradient(V, X):
    n = X.shape[1]
    grad = np.empty_like(X)
    for i in range(n):
        h = 1e-5 * np.maximum(1.0, np.abs(X[:, i]))
        Xp, Xm = X.copy(), X.copy()
        Xp[:, i] += h
        Xm[:, i] -= h
        grad[:, i] = (np.asarray(V(Xp), float) - np.asarray(V(Xm), float)) / (2.0 * h)
    return grad


def check_pointwise_dissipation(sys: HybridSystem, V: Callable, rho, lam, omega, grid: GridSpec,
                                tol: float = DEFAULT_CHECK_TOL, grad: Callable | None = None,
                                selection: int = 0, validate: bool = True) -> CheckReport:
    """Grid check of ``<grad V, f> <= -rho(w) + lam(|u|)`` on ``C`` and
    ``V(g) - V(x) <= -rho(w) + lam(|u|)`` on ``D``.

    The gradient is a central difference (relative step 1e-5) unless
    ``grad`` is given.  Sample ``traj`` holds the grid-point index.
    """
    _need(rho, FnClass.PD, "rho", validate)
    X, U = grid.points()
    if X.shape[1] != sys.n or U.shape[1] != sys.m:
        raise ValueError(f"grid has {X.shape[1]} state / {U.shape[1]} input axes, "
                         f"system has n={sys.n}, m={sys.m}")
    w = np.asarray(omega(X), dtype=float)
    slack = np.asarray(lam(input_norms(U)), dtype=float) - np.asarray(rho(w), dtype=float)
    idx = np.arange(X.shape[0])
    in_c = sys.flow_guard_values(X, U) <= 0.0
    in_d = sys.jump_guard_values(X, U) <= 0.0
    parts = []
    if np.any(in_c):
        Xc, Uc = X[in_c], U[in_c]
        G = np.asarray(grad(Xc), dtype=float).reshape(Xc.shape) if grad is not None \
            else _fd_gradient(V, Xc)
        if not np.all(np.isfinite(G)):
            bad = idx[in_c][~np.all(np.isfinite(G), axis=1)][0]
            raise GradientError(f"V is not finite near grid point x={X[bad].tolist()}")
        vdot = np.einsum("ij,ij->i", G, sys.flow_values(Xc, Uc, selection))
        n_c = int(in_c.sum())
        parts.append((np.zeros(n_c), np.zeros(n_c), vdot, slack[in_c], idx[in_c],
                      np.full(n_c, "flow")))
    if np.any(in_d):
        Xd, Ud = X[in_d], U[in_d]
        dv = np.asarray(V(sys.jump_values(Xd, Ud, selection)), float) - np.asarray(V(Xd), float)
        n_d = int(in_d.sum())
        parts.append((np.zeros(n_d), np.zeros(n_d), dv, slack[in_d], idx[in_d],
                      np.full(n_d, "jump")))
    params = {"V": _text(V), "rho": _text(rho), "lambda": _text(lam)}
    rep = _collect("pointwise_dissipation", params, parts, tol,
                   {"n_flow_points": int(in_c.sum()), "n_jump_points": int(in_d.sum())})
    if rep.n_samples:
        k = int(rep.traj[int(np.argmax(rep.residual))])
        rep.extra["witness_point"] = {"x": X[k].tolist(), "u": U[k].tolist()}
    return rep
