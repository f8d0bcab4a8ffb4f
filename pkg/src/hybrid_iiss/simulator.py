"""Solution pairs of hybrid systems by fixed-step RK4 with event location.

Flow while ``(x, u)`` is in ``C``; jump ``x+ = g(x, u)`` while it is in
``D``.  When both are possible the ``priority`` option picks one; the
result is one solution among possibly many, and the report names the
selection and priority used.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .hybrid_time import HybridArc, HybridInput, HybridTimeDomain, InputSchedule
from .system import HybridSystem

__all__ = [
    "SimOptions", "SolutionPair", "SimulationError", "InitializationError",
    "NonFiniteStateError", "simulate", "locate_event", "Termination",
]


class SimulationError(RuntimeError):
    pass


class InitializationError(SimulationError):
    """Initial state is in neither ``C`` nor ``D``."""


class NonFiniteStateError(SimulationError):
    pass


class Termination:
    HORIZON = "horizon_reached"
    LEFT = "left_C_and_D"
    ZENO = "Zeno_suspected"
    BLOWUP = "flow_blowup"


@dataclass(frozen=True)
class SimOptions:
    step: float = 1e-3
    event_tol: float = 1e-9
    horizon_T: float = 10.0
    horizon_J: int = 100
    zeno_cap: int = 100
    priority: str = "jump_first"
    selection: int = 0
    blowup: float = 1e12

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not self.event_tol > 0:
            raise ValueError(f"event_tol must be positive, got {self.event_tol}")
        if not (self.horizon_T >= 0 and math.isfinite(self.horizon_T)):
            raise ValueError(f"horizon_T must be finite and nonnegative, got {self.horizon_T}")
        if self.horizon_J < 0 or self.zeno_cap < 0:
            raise ValueError("horizon_J and zeno_cap must be nonnegative")
        if self.priority not in ("jump_first", "flow_first"):
            raise ValueError(f"priority must be jump_first or flow_first, got {self.priority!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """A simulated ``(x, u)`` on one shared hybrid time domain."""

    arc: HybridArc
    input: HybridInput
    termination: str
    stats: dict = field(default_factory=dict)
    schedule: InputSchedule | None = None

    def __post_init__(self):
        if self.arc.domain != self.input.domain:
            raise ValueError("arc and input must share one domain")

    @property
    def domain(self) -> HybridTimeDomain:
        return self.arc.domain

    @property
    def x0(self) -> np.ndarray:
        return self.arc.x0

    def samples(self):
        """``(t, j, x, u)`` at every stored sample, jump points duplicated."""
        t, j, x = self.arc.samples()
        return t, j, x, self.input.values_at(t, j)

    @classmethod
    def from_samples(cls, times, states, inp: HybridInput | None = None,
                     termination: str = Termination.HORIZON, m: int = 1):
        """Build a pair from hand-made per-phase samples (synthetic tests)."""
        times = [np.asarray(ts, dtype=float) for ts in times]
        states = [np.asarray(xs, dtype=float).reshape(len(ts), -1)
                  for ts, xs in zip(times, states)]
        domain = HybridTimeDomain(tuple((ts[0], ts[-1]) for ts in times))
        if inp is None:
            inp = HybridInput.constant(domain, np.zeros(m))
        return cls(HybridArc(domain, tuple(times), tuple(states)), inp, termination,
                   {"synthetic": True})


def locate_event(sys: HybridSystem, x, u, h: float, which: str = "flow_exit",
                 tol: float = 1e-9, selection: int = 0):
    """Event time within one RK4 step of length ``h`` from ``x``, or ``None``.

    ``which`` is ``"flow_exit"`` (``c`` rises above 0) or ``"jump_entry"``
    (``d`` drops to 0).  Raises :class:`SimulationError` when bisection
    cannot bracket the crossing to ``tol``.
    """
    maps = sys.compiled(selection)
    x = np.asarray(x, dtype=float).reshape(sys.n).copy()
    u = np.asarray(u if u is not None else np.zeros(sys.m), dtype=float).reshape(sys.m).copy()
    bufs = [np.empty(sys.n) for _ in range(6)]
    K.rk4_step(maps.f, x, u, h, *bufs[:5], bufs[5])
    exit_mode = which == "flow_exit"
    if which not in ("flow_exit", "jump_entry"):
        raise ValueError(f"unknown event kind {which!r}")
    guard = maps.c if exit_mode else maps.d
    end = guard(bufs[5], u)
    if (exit_mode and end <= tol) or (not exit_mode and end > 0.0):
        return None
    out = np.empty(sys.n)
    tau, _, ok = K.bisect_event(maps.f, guard, x, u, h, tol, exit_mode, *bufs[:5], out)
    if not ok:
        raise SimulationError("bracket lost while locating the event")
    return float(tau)


def _as_schedule(sys: HybridSystem, inp) -> InputSchedule:
    if inp is None:
        return InputSchedule.zero(sys.m)
    if isinstance(inp, InputSchedule):
        sched = inp
    else:
        sched = InputSchedule.constant(inp)
    if sched.m != sys.m and not (sys.m == 0 and sched.is_zero()):
        raise ValueError(f"input has width {sched.m}, system m={sys.m}")
    if sys.m == 0 and sched.m != 0:
        sched = InputSchedule.zero(0)
    return sched


def simulate(sys: HybridSystem, x0, inp=None, opts: SimOptions | None = None) -> SolutionPair:
    """Simulate one solution pair.

    ``inp`` is an :class:`InputSchedule`, a constant level, or ``None`` for
    zero input.  Stops at ``horizon_T``, when a jump is due with
    ``horizon_J`` jumps done, when neither flow nor jump is possible, on
    suspected Zeno behaviour, or on blow-up.
    """
    opts = opts or SimOptions()
    sched = _as_schedule(sys, inp)
    maps = sys.compiled(opts.selection)
    x = np.ascontiguousarray(np.asarray(x0, dtype=float).reshape(sys.n)).copy()
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError("initial state is not finite")
    tol, h, T, J = opts.event_tol, opts.step, opts.horizon_T, opts.horizon_J
    jump_first = opts.priority == "jump_first"

    u_flow0 = np.ascontiguousarray(sched.level_at(0.0), dtype=float)
    u_jump0 = np.ascontiguousarray(sched.jump_value(0, 0.0), dtype=float)
    if not (maps.c(x, u_flow0) <= tol or maps.d(x, u_jump0) <= tol):
        raise InitializationError(f"x0={x.tolist()} with u(0,0) is in neither C nor D")

    kstats = np.zeros(5)
    kstats[4] = -math.inf
    max_jump_guard = -math.inf
    phases_t: list = [[np.array([0.0])]]
    phases_x: list = [[x[None, :].copy()]]
    t, j = 0.0, 0
    phase_start = 0.0
    zero_len = 0
    flow_blocked = False
    termination = None

    while termination is None:
        u_flow = np.ascontiguousarray(sched.level_at(t), dtype=float)
        u_jump = np.ascontiguousarray(sched.jump_value(j, t), dtype=float)
        can_d = maps.d(x, u_jump) <= tol
        can_c = (not flow_blocked) and maps.c(x, u_flow) <= tol
        if can_d and (jump_first or not can_c or t >= T):
            if j >= J or t >= T:
                termination = Termination.HORIZON
                break
            zero_len = zero_len + 1 if t == phase_start else 0
            if zero_len > opts.zeno_cap:
                termination = Termination.ZENO
                break
            max_jump_guard = max(max_jump_guard, maps.d(x, u_jump))
            x = maps.g(x, u_jump, np.empty(sys.n))
            if not np.all(np.isfinite(x)):
                raise NonFiniteStateError(f"jump map produced {x.tolist()} at (t={t}, j={j})")
            j += 1
            phase_start = t
            phases_t.append([np.array([t])])
            phases_x.append([x[None, :].copy()])
            flow_blocked = False
            continue
        if t >= T:
            termination = Termination.HORIZON
            break
        if not can_c:
            termination = Termination.LEFT
            break
        t_stop = min(sched.next_break(t), T)
        while True:
            cap = int(min((t_stop - t) / h + 4, 1 << 18))
            ts = np.empty(cap)
            xs = np.empty((cap, sys.n))
            status, count = K.flow_segment(maps.f, maps.c, maps.d, x, u_flow, t, t_stop, h,
                                           tol, jump_first, opts.blowup, ts, xs, kstats)
            if count:
                phases_t[-1].append(ts[:count].copy())
                phases_x[-1].append(xs[:count].copy())
                t = float(ts[count - 1])
                x = xs[count - 1].copy()
            if status != K.FULL:
                break
        if status == K.EXIT_C:
            flow_blocked = True
        elif status == K.BLOWUP:
            termination = Termination.BLOWUP
        elif status == K.NONFINITE:
            raise NonFiniteStateError(f"flow produced a non-finite state near t={t}, j={j}")

    times = tuple(np.concatenate(c) for c in phases_t)
    states = tuple(np.concatenate(c, axis=0) for c in phases_x)
    domain = HybridTimeDomain(tuple((float(ts[0]), float(ts[-1])) for ts in times))
    arc = HybridArc(domain, times, states)
    stats = {
        "steps": int(kstats[0]),
        "events": int(kstats[1]),
        "bisections": int(kstats[2]),
        "bracket_retries": int(kstats[3]),
        "jumps": j,
        "max_flow_guard": float(kstats[4]) if math.isfinite(kstats[4]) else None,
        "max_jump_guard": float(max_jump_guard) if math.isfinite(max_jump_guard) else None,
        "selection": opts.selection,
        "priority": opts.priority,
    }
    return SolutionPair(arc, sched.realize(domain), termination, stats, sched)
