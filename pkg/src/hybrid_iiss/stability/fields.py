"""Scalar fields ``V(x)`` used as dissipation certificates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..expr import Node, evaluate_node, free_vars, parse_expression, to_text

__all__ = ["ScalarField"]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Expression over ``x1..xn`` (``x`` when n = 1) and ``w``, the indicator value.

    ``w`` is only available when an indicator is attached.
    """

    expr: Node
    n: int
    indicator: object = None

    @classmethod
    def parse(cls, text: str, n: int, indicator=None):
        node = parse_expression(text)
        allowed = {f"x{k + 1}" for k in range(n)} | ({"x"} if n == 1 else set())
        if indicator is not None:
            allowed.add("w")
        extra = free_vars(node) - allowed
        if extra:
            raise NameError(f"unexpected variable(s) {sorted(extra)} in {text!r}")
        return cls(node, n, indicator)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        env = {f"x{k + 1}": X[:, k] for k in range(self.n)}
        if self.n == 1:
            env["x"] = X[:, 0]
        if self.indicator is not None:
            env["w"] = np.asarray(self.indicator(X), dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(evaluate_node(self.expr, env), dtype=float),
                                  (X.shape[0],)).copy()
        return float(out[0]) if single else out

    def text(self) -> str:
        return to_text(self.expr)

    def __repr__(self):
        return f"ScalarField({self.text()!r})"
