"""Compare the compiled kernels against the pure-interpreter fallback.

Each backend runs in its own subprocess because the choice is fixed at
import time by HYBRID_IISS_NUMBA.  Usage: python3 benchmarks/bench_kernels.py
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from hybrid_iiss import NUMBA_ENABLED
from hybrid_iiss.simulator import SimOptions, simulate
from hybrid_iiss.system import bad_example, decay_jump_demo

horizon, repeats = float(sys.argv[1]), int(sys.argv[2])
flow, jump = bad_example(), decay_jump_demo()
out = {"numba": NUMBA_ENABLED}
t0 = time.perf_counter()
simulate(flow, [2.0], None, SimOptions(horizon_T=0.01))
simulate(jump, [1.0], None, SimOptions(horizon_J=2))
out["warmup_s"] = time.perf_counter() - t0
for name, sys_, x0, opts in (
        ("flow", flow, [2.0], SimOptions(horizon_T=horizon)),
        ("jumps", jump, [1.0], SimOptions(horizon_T=horizon, horizon_J=10**6, zeno_cap=10**6))):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        sol = simulate(sys_, x0, None, opts)
        best = min(best, time.perf_counter() - t0)
    out[name] = {"best_s": best, "steps": sol.stats["steps"],
                 "x_end": float(sol.arc.terminal_state[0])}
print(json.dumps(out))
"""


def run(flag, horizon, repeats):
    env = dict(os.environ, HYBRID_IISS_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", CHILD, str(horizon), str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()
    fast = run("1", args.horizon, args.repeats)
    slow = run("0", args.horizon, args.repeats)
    print(f"horizon T={args.horizon}, best of {args.repeats}")
    print(f"{'case':8s} {'numba [s]':>12s} {'python [s]':>12s} {'speedup':>9s} {'|dx_end|':>10s}")
    for case in ("flow", "jumps"):
        a, b = fast[case], slow[case]
        print(f"{case:8s} {a['best_s']:12.4f} {b['best_s']:12.4f} "
              f"{b['best_s'] / a['best_s']:9.1f} {abs(a['x_end'] - b['x_end']):10.2e}")
    print(f"warm-up (compile) numba {fast['warmup_s']:.2f} s, python {slow['warmup_s']:.2f} s")


if __name__ == "__main__":
    main()
