"""Numba switch for the hot kernels.

Set ``HYBRID_IISS_NUMBA=0`` before import to run every kernel through the
plain interpreter on numpy arrays.  Both paths execute the same source.
"""
import math
import os

try:
    import numba as nb
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get(
    "HYBRID_IISS_NUMBA", "1").strip().lower() not in {"0", "false", "no", "off"}


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


# Domain-safe scalar helpers used by generated code.  They return nan/inf
# instead of raising so interpreted and compiled paths agree.

@njit(cache=False)
def _div(a, b):
    if b == 0.0:
        if a == 0.0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


@njit(cache=False)
def _pow(a, b):
    if a < 0.0 and b != math.floor(b):
        return math.nan
    if a == 0.0 and b < 0.0:
        return math.inf
    if abs(a) > 1.0 and b * math.log(abs(a)) > 709.0:
        if a < 0.0 and b - 2.0 * math.floor(0.5 * b) != 0.0:
            return -math.inf
        return math.inf
    return a ** b


@njit(cache=False)
def _exp(a):
    if a > 709.0:
        return math.inf
    return math.exp(a)


@njit(cache=False)
def _ln(a):
    if a < 0.0 or a != a:
        return math.nan
    if a == 0.0:
        return -math.inf
    return math.log(a)


@njit(cache=False)
def _sqrt(a):
    if a < 0.0 or a != a:
        return math.nan
    return math.sqrt(a)


SCALAR_HELPERS = {
    "_div": _div,
    "_pow": _pow,
    "_exp": _exp,
    "_ln": _ln,
    "_sqrt": _sqrt,
    "math": math,
}
