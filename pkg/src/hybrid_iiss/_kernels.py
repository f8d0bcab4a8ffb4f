"""RK4 flow kernel with guard event location.

Maps are passed in as first-class functions: ``f(x, u, out)`` and the
guards ``c(x, u)``, ``d(x, u)``.  Under numba each distinct set of maps
specializes the kernel once.
"""
import math

import numpy as np

from ._accel import njit

END = 0          # reached t_stop
EXIT_C = 1       # flow guard crossed zero; state left on the boundary
ENTER_D = 2      # jump guard became <= 0; state on the boundary
BLOWUP = 3       # |x| exceeded the blow-up threshold
NONFINITE = 4    # a stage produced nan/inf
FULL = 5         # sample buffer exhausted; call again

MAX_BISECT = 64
MAX_HALVINGS = 8


@njit(nogil=True)
def rk4_step(f, x, u, h, k1, k2, k3, k4, tmp, out):
    n = x.shape[0]
    f(x, u, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    f(tmp, u, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    f(tmp, u, k3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    f(tmp, u, k4)
    for i in range(n):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(nogil=True)
def _finite(x):
    for i in range(x.shape[0]):
        if not math.isfinite(x[i]):
            return False
    return True


@njit(nogil=True)
def _norm(x):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * x[i]
    return math.sqrt(acc)


@njit(nogil=True)
def bisect_event(f, guard, x, u, h, tol, exit_mode, k1, k2, k3, k4, tmp, out):
    """Bisect the sub-step length ``tau`` in ``(0, h]`` on a guard crossing.

    ``exit_mode`` true: the guard is ``c`` and we look for the last point with
    ``c <= 0``; it is accepted once ``c >= -tol``.  Otherwise the guard is
    ``d`` and we look for the first point with ``d <= 0``, accepted once
    ``d >= -tol``.  The accepted state is written to ``out``.
    Returns ``(tau, iterations, converged)``.
    """
    lo = 0.0
    hi = h
    # the side of the bracket that is kept at the end
    keep = 0.0 if exit_mode else h
    for i in range(MAX_BISECT):
        if keep > 0.0:
            rk4_step(f, x, u, keep, k1, k2, k3, k4, tmp, out)
        else:
            for q in range(x.shape[0]):
                out[q] = x[q]
        g = guard(out, u)
        if abs(g) <= tol:
            return keep, i, True
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        rk4_step(f, x, u, mid, k1, k2, k3, k4, tmp, out)
        gm = guard(out, u)
        if exit_mode:
            if gm > 0.0:
                hi = mid
            else:
                lo = mid
            keep = lo
        else:
            if gm <= 0.0:
                hi = mid
            else:
                lo = mid
            keep = hi
    if keep > 0.0:
        rk4_step(f, x, u, keep, k1, k2, k3, k4, tmp, out)
    else:
        for q in range(x.shape[0]):
            out[q] = x[q]
    g = guard(out, u)
    return keep, MAX_BISECT, abs(g) <= tol


@njit(nogil=True)
def flow_segment(f, c, d, x0, u, t0, t_stop, h, tol, check_d, blowup, ts, xs, stats):
    """Integrate from ``(t0, x0)`` with constant input ``u`` up to ``t_stop``.

    Accepted samples (excluding the start point) go to ``ts``/``xs``.
    ``stats`` accumulates ``[steps, events, bisections, bracket_retries,
    max_flow_guard]``.  Returns ``(status, count)``.
    """
    n = x0.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    xn = np.empty(n)
    xe = np.empty(n)
    x = x0.copy()
    t = t0
    cap = ts.shape[0]
    count = 0
    span = t_stop - t0
    n_steps = int(math.ceil(span / h - 1e-9)) if span > 0.0 else 0
    k = 0
    hh = h
    halvings = 0
    while k < n_steps or (hh < h and t < t_stop):
        if count >= cap:
            return FULL, count
        if hh < h:
            t_next = min(t + hh, t_stop)
        else:
            t_next = t_stop if k + 1 >= n_steps else t0 + (k + 1) * h
        step = t_next - t
        if step <= 0.0:
            k += 1
            continue
        rk4_step(f, x, u, step, k1, k2, k3, k4, tmp, xn)
        stats[0] += 1.0
        if not _finite(xn):
            return NONFINITE, count
        cv = c(xn, u)
        exit_c = cv > tol
        enter_d = check_d and d(xn, u) <= 0.0
        if exit_c or enter_d:
            tau_c = step + 1.0
            tau_d = step + 1.0
            ok = True
            if enter_d:
                tau_d, it, conv = bisect_event(f, d, x, u, step, tol, False,
                                               k1, k2, k3, k4, tmp, xe)
                stats[2] += it
                ok = ok and conv
            if exit_c:
                tau_c, it, conv = bisect_event(f, c, x, u, step, tol, True,
                                               k1, k2, k3, k4, tmp, xn)
                stats[2] += it
                ok = ok and conv
            if not ok and halvings < MAX_HALVINGS:
                # bracket lost: retry the interval with a smaller step
                stats[3] += 1.0
                halvings += 1
                hh = 0.5 * step
                continue
            if enter_d and tau_d <= tau_c:
                status = ENTER_D
                tau = tau_d
                for i in range(n):
                    xn[i] = xe[i]
            else:
                status = EXIT_C
                tau = tau_c
            stats[1] += 1.0
            if tau > 0.0:
                t = t + tau
                ts[count] = t
                for i in range(n):
                    xs[count, i] = xn[i]
                    x[i] = xn[i]
                count += 1
                cv = c(xn, u)
                if cv > stats[4]:
                    stats[4] = cv
            return status, count
        t = t_next
        ts[count] = t
        for i in range(n):
            xs[count, i] = xn[i]
            x[i] = xn[i]
        count += 1
        if cv > stats[4]:
            stats[4] = cv
        if hh < h:
            # finish the halved interval, then resume the regular grid
            if t >= t0 + (k + 1) * h or t >= t_stop:
                hh = h
                halvings = 0
                k += 1
        else:
            k += 1
        if _norm(x) > blowup:
            return BLOWUP, count
    return END, count
