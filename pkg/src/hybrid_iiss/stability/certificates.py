"""Closed-form certificates for the scalar system ``x' = -x (x - 1)^2 + u``.

Both certificates measure the state by ``|x|`` (target set ``{0}``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..comparison import DomainError, FnClass, KLFn, ScalarComparisonFn

__all__ = ["LocalCertificate", "PracticalCertificate", "bad_example_local_cert",
           "bad_example_practical_cert", "ALPHA_TEXT", "SIGMA_TEXT"]

ALPHA_TEXT = "2*s^4 + 4*s^3 + s^2"
SIGMA_TEXT = "s^2 + 2*s"


@dataclass(frozen=True)
class LocalCertificate:
    beta: KLFn
    chi: ScalarComparisonFn
    gamma: ScalarComparisonFn
    r: float
    l: float


@dataclass(frozen=True)
class PracticalCertificate:
    beta: KLFn
    chi: ScalarComparisonFn
    gamma: ScalarComparisonFn
    p: float


def bad_example_local_cert(l: float) -> LocalCertificate:
    """``l``-local iISS certificate for ``0 < l < 1``.

    ``gamma(r) = 4 l^2 r / (1 - l^2)``, ``r = sqrt((l^2 + 1) / 2)``,
    ``beta(s, t) = sqrt(2) exp(-(1 - r)^2 t) s`` and
    ``chi(s) = sqrt(1 - l^2) / l * sqrt(s)``.
    """
    if not 0.0 < l < 1.0:
        raise DomainError(f"l must lie in (0, 1), got {l}")
    r = math.sqrt((l * l + 1.0) / 2.0)
    gamma = ScalarComparisonFn.parse(f"{4.0 * l * l / (1.0 - l * l)!r}*s", FnClass.KINF)
    beta = KLFn.parse(f"sqrt(2)*exp(-{(1.0 - r) ** 2!r}*t)*s")
    chi = ScalarComparisonFn.parse(f"{math.sqrt(1.0 - l * l) / l!r}*sqrt(s)", FnClass.KINF)
    return LocalCertificate(beta, chi, gamma, r, l)


def bad_example_practical_cert() -> PracticalCertificate:
    """1-practical iISS certificate.

    Let ``w`` be the distance to ``[-1, 1]``.  Outside the interval
    ``w' <= -(1 + w) w^2 + |u|``, so by comparison with ``y' = -y^2``,
    ``w(t) <= w0 / (1 + w0 t) + int |u|``.  With ``|x| <= w + 1`` and
    ``w0 = max(|x0| - 1, 0)`` this gives ``beta(s, t) = bt(max(s - 1, 0), t) + s/t``
    with ``bt(s, t) = s / (1 + s t)``, ``chi = id``, ``gamma(s) = s^2 + 2 s``
    (which dominates ``s``) and ``p = 1``.
    """
    beta = KLFn.parse("max(s-1,0)/(1+max(s-1,0)*t) + s/t", extended=True)
    return PracticalCertificate(beta, ScalarComparisonFn.identity(),
                                ScalarComparisonFn.parse(SIGMA_TEXT, FnClass.KINF), 1.0)
