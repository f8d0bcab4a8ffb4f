"""Command-line interface: ``hybrid-iiss <subcommand> [options]``.

Exit codes: 0 completed, 1 violation found (check/falsify), 2 usage or
parse error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys as _sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .comparison import KLFn, KLLFn, kl_to_kll, kll_to_kl
from .expr import ParseError
from .falsifier import falsify
from .hybrid_time import write_trajectory_csv
from .scenario import ScenarioError, load_scenario
from .simulator import SimulationError, simulate
from .stability.checks import NonzeroInputError
from .stability.spec import SpecError
from .system import SystemSpecError

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _out_dir(args, scenario=None) -> Path:
    if args.out:
        return Path(args.out)
    if scenario is not None and scenario.output.get("dir"):
        return Path(scenario.output["dir"])
    return Path(".")


def _scenario(args):
    if not args.scenario:
        raise UsageError(f"{args.command} needs --scenario")
    sc = load_scenario(args.scenario)
    return sc.with_overrides(seed=args.seed, tol=args.tol, priority=args.priority,
                             trials=args.trials, horizon_t=args.horizon_t,
                             horizon_j=args.horizon_j)


def _tol(args, default=1e-6):
    return default if args.tol is None else float(args.tol)


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    if not sc.runs:
        raise UsageError("scenario has no initial_state or runs")
    out = _out_dir(args, sc)
    stats = []
    for i, run in enumerate(sc.runs):
        sol = simulate(sc.system, run.x0, run.schedule, sc.options)
        t, j, x = sol.arc.samples()
        name = f"trajectory_{i}.csv"
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / name, sol.arc, sol.input, sc.system.indicator(x))
        stats.append({"run": i, "csv": name, "termination": sol.termination,
                      "phases": [list(p) for p in sol.domain.phases],
                      "terminal_state": sol.arc.terminal_state.tolist(), "stats": sol.stats})
        print(f"run {i}: {sol.termination}, {len(sol.domain.phases)} phase(s) -> {out / name}")
    _write(out / "simulate.json", dumps({"options": sc.options.to_dict(), "runs": stats}))
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _scenario(args)
    if not sc.estimates:
        raise UsageError("scenario has no estimates")
    tol = _tol(args)
    sols = [simulate(sc.system, r.x0, r.schedule, sc.options) for r in sc.runs]
    reports = []
    for spec in sc.estimates:
        if spec.trajectory_based and not sols:
            raise UsageError(f"{spec.kind} needs initial_state or runs")
        rep = spec.check(sols, sc.system.indicator, tol, system=sc.system)
        reports.append(rep)
        print(rep.summary())
    out = _out_dir(args, sc)
    _write(out / "check.json", dumps({"reports": [r.to_dict(samples=False) for r in reports]}))
    return EXIT_VIOLATION if any(r.violated for r in reports) else EXIT_OK


def _witness_scenario(sc, spec_index, witness) -> dict:
    raw = copy.deepcopy(sc.raw)
    for k in ("runs", "falsifier", "output"):
        raw.pop(k, None)
    raw["seed"] = sc.seed
    raw["simulation"] = {k: v for k, v in sc.options.to_dict().items()}
    raw["initial_state"] = [float(v) for v in witness.x0]
    raw["input"] = {k: v for k, v in witness.schedule.to_dict().items() if v is not None}
    raw["estimates"] = [sc.raw["estimates"][spec_index]]
    return raw


def cmd_falsify(args) -> int:
    sc = _scenario(args)
    if sc.sampler is None:
        raise UsageError("scenario has no falsifier block")
    if not sc.estimates:
        raise UsageError("scenario has no estimates")
    out = _out_dir(args, sc)
    results, found = [], False
    for i, spec in enumerate(sc.estimates):
        if not spec.trajectory_based:
            raise UsageError(f"{spec.kind} is checked on a grid; use the check subcommand")
        rep = falsify(sc.system, spec, sc.sampler, sc.options)
        entry = {"estimate": i, "kind": spec.kind, "report": rep.to_dict()}
        if rep.witness is not None:
            name = f"witness_{i}.yaml"
            _write(out / name, yaml.safe_dump(_clean(_witness_scenario(sc, i, rep.witness)),
                                              sort_keys=True))
            entry["witness_file"] = name
        found |= rep.violation_found
        results.append(entry)
        print(f"{spec.kind}: {'violation found' if rep.violation_found else 'no violation found'}"
              f" (max residual {rep.max_residual:.6g}, {rep.n_trials} trials)")
    _write(out / "falsify.json", dumps({"sampler": sc.sampler.to_dict(),
                                        "options": sc.options.to_dict(), "results": results}))
    return EXIT_VIOLATION if found else EXIT_OK


def _grid(spec, integer=False):
    lo, hi, num = spec
    g = np.linspace(float(lo), float(hi), int(num))
    return np.round(g) if integer else g


def cmd_convert(args) -> int:
    sc = _scenario(args)
    if sc.convert is None:
        raise UsageError("scenario has no convert block")
    cv = sc.convert
    ext = bool(cv.get("beta_extended", False))
    S, T, J = np.meshgrid(_grid(cv["s"]), _grid(cv["t"]), _grid(cv["j"], True), indexing="ij")
    S, T, J = S.ravel(), T.ravel(), J.ravel()
    if cv["direction"] == "kl_to_kll":
        bt = KLFn.parse(str(cv["beta"]), ext)
        b = kl_to_kll(bt)
        cols = ["s", "t", "j", "beta_kl(s,t+j)", "beta_kll(s,t,j)"]
        data = [S, T, J, bt(S, T + J), b(S, T, J)]
    else:
        b = KLLFn.parse(str(cv["beta"]), ext)
        bt = kll_to_kl(b)
        lhs, rhs = b(S, T, J), bt(S, T + J)
        cols = ["s", "t", "j", "beta_kll(s,t,j)", "beta_kl(s,t+j)", "margin"]
        data = [S, T, J, lhs, rhs, rhs - lhs]
    data = [np.broadcast_to(np.asarray(c, dtype=float), S.shape) for c in data]
    out = _out_dir(args, sc)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "convert.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
    print(f"{cv['direction']}: {S.size} rows -> {path}")
    return EXIT_OK


def cmd_demo_bad_example(args) -> int:
    from .demos import bad_example_reproduction, summary_lines
    seed = 0 if args.seed is None else int(args.seed)
    trials = 200 if args.trials is None else int(args.trials)
    rep = bad_example_reproduction(seed, trials)
    for line in summary_lines(rep):
        print(line)
    if args.out:
        _write(Path(args.out) / "demo_bad_example.json", dumps(rep))
    return EXIT_OK


def cmd_demo_jump(args) -> int:
    from .demos import jump_demo
    priority = {"jump": "jump_first", "flow": "flow_first", None: "jump_first"}[args.priority]
    hj = 3 if args.horizon_j is None else int(args.horizon_j)
    ht = 10.0 if args.horizon_t is None else float(args.horizon_t)
    sys, sol = jump_demo(hj, ht, priority)
    for k, (a, b) in enumerate(sol.domain.phases):
        print(f"phase {k}: t in [{a:.6f}, {b:.6f}]")
    print(f"termination: {sol.termination}")
    out = _out_dir(args)
    if args.out:
        t, j, x = sol.arc.samples()
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / "demo_jump.csv", sol.arc, sol.input, sys.indicator(x))
        _write(out / "demo_jump.json", dumps({
            "phases": [list(p) for p in sol.domain.phases], "termination": sol.termination,
            "stats": sol.stats}))
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "simulate every run in a scenario (CSV + JSON stats)"),
    "check": (cmd_check, "check the scenario's estimates (CheckReport JSON)"),
    "falsify": (cmd_falsify, "search for violations (FalsificationReport JSON + witness)"),
    "convert": (cmd_convert, "tabulate kl_to_kll / kll_to_kl on a grid (CSV)"),
    "demo-bad-example": (cmd_demo_bad_example, "reproduce the scalar counterexample"),
    "demo-jump": (cmd_demo_jump, "simulate the decay/jump demo"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybrid-iiss", description="Simulate hybrid systems and check "
                "integral input-to-state stability estimates.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--scenario", help="scenario YAML file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="random seed (default: scenario seed or 0)")
        s.add_argument("--tol", type=float, help="check tolerance")
        s.add_argument("--priority", choices=("jump", "flow"), help="priority on C and D")
        s.add_argument("--trials", type=int, help="number of random trials")
        s.add_argument("--horizon-t", type=float, dest="horizon_t", help="flow time horizon")
        s.add_argument("--horizon-j", type=int, dest="horizon_j", help="jump horizon")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be nonnegative")
        return COMMANDS[args.command][0](args)
    except UsageError as exc:
        print(f"hybrid-iiss: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except (ScenarioError, SpecError, SystemSpecError, ParseError, NonzeroInputError) as exc:
        print(f"hybrid-iiss: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hybrid-iiss: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"hybrid-iiss: simulation failed: {exc}", file=_sys.stderr)
        return EXIT_USAGE


def main(argv=None):
    _sys.exit(run(argv))


if __name__ == "__main__":
    main()
