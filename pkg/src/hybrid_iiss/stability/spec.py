"""Estimate specifications: a kind plus its validated parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..comparison import (ClassValidationError, FnClass, KLFn, KLLFn, ScalarComparisonFn,
                          kl_to_kll, require_class, validate_kll)
from ..expr import free_vars, parse_expression
from .checks import (GridSpec, check_0ugas, check_iiss, check_local_iiss,
                     check_pointwise_dissipation, check_practical_iiss, check_traj_dissipation,
                     check_ubebs, check_ubebs_alpha123)
from .fields import ScalarField
from .report import DEFAULT_CHECK_TOL

__all__ = ["EstimateSpec", "SpecError", "KINDS"]


class SpecError(ValueError):
    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


_K = FnClass
KINDS = {
    "iISS": {"beta": "KLL", "chi": _K.KINF, "gamma": _K.K},
    "zero_UGAS": {"beta": "KLL"},
    "UBEBS": {"alpha": _K.KINF, "kappa": _K.KINF, "gamma": _K.K, "c": "nonneg"},
    "UBEBS_c0": {"alpha": _K.KINF, "kappa": _K.KINF, "gamma": _K.K},
    "UBEBS_alpha123": {"alpha1": _K.KINF, "alpha2": _K.KINF, "alpha3": _K.KINF,
                       "gamma_hat": _K.K},
    "local_iISS": {"beta": "KLL", "chi": _K.KINF, "gamma": _K.K, "l": "pos"},
    "practical_iISS": {"beta": "KLL", "chi": _K.KINF, "gamma": _K.K, "p": "nonneg"},
    "traj_dissipation": {"V": "field", "alpha1_bar": _K.KINF, "alpha2_bar": _K.KINF,
                         "rho": _K.PD, "gamma_bar": _K.K},
    "pointwise_dissipation": {"V": "field", "rho": _K.PD, "lambda": _K.UNCLASSIFIED,
                              "grid": "grid"},
}
_OPTIONAL = {"beta_extended"}


@dataclass(frozen=True, eq=False)
class EstimateSpec:
    """A stability estimate to check.  Construction validates every parameter."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown estimate kind {self.kind!r}", "kind")
        need = KINDS[self.kind]
        missing = set(need) - set(self.params)
        if missing:
            raise SpecError(f"missing parameter(s) {sorted(missing)}", self.kind)
        extra = set(self.params) - set(need) - _OPTIONAL
        if extra:
            raise SpecError(f"unknown parameter(s) {sorted(extra)}", self.kind)
        for name, cls in need.items():
            value = self.params[name]
            if cls == "KLL":
                beta = value
                if isinstance(beta, KLFn):
                    beta = kl_to_kll(beta)
                    self.params[name] = beta
                if not isinstance(beta, KLLFn):
                    raise SpecError("expected a KL or KLL bound", name)
                if not beta.extended:
                    rep = validate_kll(beta)
                    if not rep.passed:
                        raise SpecError(f"not class KLL: {rep}", name)
            elif cls == "pos":
                if not float(value) > 0:
                    raise SpecError(f"must be positive, got {value}", name)
            elif cls == "nonneg":
                if not float(value) >= 0:
                    raise SpecError(f"must be nonnegative, got {value}", name)
            elif cls in ("field", "grid"):
                continue
            elif cls != _K.UNCLASSIFIED:
                try:
                    require_class(value, cls, name)
                except ClassValidationError as exc:
                    raise SpecError(str(exc), name) from None

    @classmethod
    def from_strings(cls, kind: str, raw: Mapping, n: int = 1, indicator=None):
        """Build from expression strings (scenario files)."""
        if kind not in KINDS:
            raise SpecError(f"unknown estimate kind {kind!r}", "kind")
        params: dict = {}
        extended = bool(raw.get("beta_extended", False))
        for name, value in raw.items():
            if name in _OPTIONAL:
                continue
            target = KINDS[kind].get(name)
            if target is None:
                raise SpecError(f"unknown parameter {name!r}", kind)
            try:
                if target == "KLL":
                    node = parse_expression(str(value))
                    if "j" in free_vars(node):
                        params[name] = KLLFn.parse(str(value), extended)
                    else:
                        params[name] = kl_to_kll(KLFn.parse(str(value), extended))
                elif target in ("pos", "nonneg"):
                    params[name] = float(value)
                elif target == "field":
                    params[name] = ScalarField.parse(str(value), n, indicator)
                elif target == "grid":
                    params[name] = GridSpec(tuple(tuple(r) for r in value["x"]),
                                            tuple(tuple(r) for r in value.get("u", ())))
                else:
                    params[name] = ScalarComparisonFn.parse(str(value), target)
            except SpecError:
                raise
            except (ValueError, NameError, KeyError, TypeError) as exc:
                raise SpecError(str(exc), name) from None
        return cls(kind, params)

    def parameter_texts(self) -> dict:
        out = {}
        for k, v in self.params.items():
            out[k] = v.text() if hasattr(v, "text") else v if isinstance(v, (int, float)) \
                else repr(v)
        return out

    def check(self, sols, omega, tol: float = DEFAULT_CHECK_TOL, system=None):
        """Run the matching check (already validated, so no re-validation)."""
        p = self.params
        k = self.kind
        if k == "iISS":
            return check_iiss(sols, p["beta"], p["chi"], p["gamma"], omega, tol, validate=False)
        if k == "zero_UGAS":
            return check_0ugas(sols, p["beta"], omega, tol, validate=False)
        if k in ("UBEBS", "UBEBS_c0"):
            return check_ubebs(sols, p["alpha"], p["kappa"], p["gamma"], float(p.get("c", 0.0)),
                               omega, tol, validate=False)
        if k == "UBEBS_alpha123":
            return check_ubebs_alpha123(sols, p["alpha1"], p["alpha2"], p["alpha3"],
                                        p["gamma_hat"], omega, tol, validate=False)
        if k == "local_iISS":
            return check_local_iiss(sols, p["beta"], p["chi"], p["gamma"], float(p["l"]), omega,
                                    tol, validate=False)
        if k == "practical_iISS":
            return check_practical_iiss(sols, p["beta"], p["chi"], p["gamma"], float(p["p"]),
                                        omega, tol, validate=False)
        if k == "traj_dissipation":
            return check_traj_dissipation(sols, p["V"], p["alpha1_bar"], p["alpha2_bar"],
                                          p["rho"], p["gamma_bar"], omega, tol, validate=False)
        if k == "pointwise_dissipation":
            if system is None:
                raise SpecError("needs the system", k)
            return check_pointwise_dissipation(system, p["V"], p["rho"], p["lambda"], omega,
                                               p["grid"], tol, validate=False)
        raise SpecError(f"unsupported kind {k!r}")  # pragma: no cover

    @property
    def trajectory_based(self) -> bool:
        return self.kind != "pointwise_dissipation"
