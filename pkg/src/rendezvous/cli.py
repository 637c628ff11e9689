"""Command-line entry point.

Usage::

    rendezvous SUBCOMMAND --scenario PATH --out DIR [--seed U64] [--grid N1xN2xNTH]
               [--time-slices K] [--attempts N] [--sigma-r FLOAT] [--nugget FLOAT]

Exit status is 0 on success, 1 when the problem is infeasible (for example an
empty reachable set) and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from .baseline import PursuerState, run_baseline, write_baseline_csv
from .errors import ConfigError, InfeasibleError
from .gp_posterior import write_density_csv, write_weights
from .hjb import write_reachable, write_value_function
from .planner import write_plan
from .sim_harness import (ValueFunctionCache, dumps17, estimate, generate_truth, load_scenario,
                          observation_times, run_scenario, sample_observations)

__all__ = ["main", "dispatch", "build_parser"]

SUBCOMMANDS = ("hjb", "estimate", "plan", "baseline", "simulate", "compare")
EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2
_VOLATILE = {"timings.json"}
_IGNORED = {"manifest.json", ".lock"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message} (see --help)")


def _grid(text):
    try:
        parts = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N1xN2xNTH, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 3:
        raise argparse.ArgumentTypeError(f"expected three sizes >= 3 like 101x101x64, got {text!r}")
    return parts


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rendezvous", description="Reachability-aware rendezvous planning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, type=Path, help="scenario JSON (schema v1)")
        s.add_argument("--out", required=True, type=Path, help="output directory")
        s.add_argument("--seed", type=_u64)
        s.add_argument("--grid", type=_grid, help="HJB grid, e.g. 101x101x64")
        s.add_argument("--time-slices", type=int)
        s.add_argument("--attempts", type=int)
        s.add_argument("--sigma-r", type=float)
        s.add_argument("--nugget", type=float)
        s.add_argument("--cache", type=Path, help="value-function cache directory")
    return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, scenario, seed: int):
    files = {}
    for f in sorted(out.rglob("*")):
        rel = f.relative_to(out).as_posix()
        if not f.is_file() or rel in _IGNORED:
            continue
        files[rel] = {"sha256": None if rel in _VOLATILE else _sha256(f),
                      "bytes": None if rel in _VOLATILE else f.stat().st_size}
    doc = {"manifest_version": 1, "command": command, "seed": seed,
           "effective_config": scenario.to_dict(), "artifacts": files}
    (out / "manifest.json").write_text(dumps17(doc))


def _save_truth(out, truth, obs):
    np.savetxt(out / "truth.csv", np.column_stack([truth.times, truth.states]), delimiter=",",
               fmt="%.17g", header="t,x1,x2,theta", comments="")
    np.savetxt(out / "observations.csv", np.column_stack([obs.times, obs.values]), delimiter=",",
               fmt="%.17g", header="t,x1,x2,theta", comments="")


def _cmd_hjb(sc, out, seed, cache):
    cfg = sc.config
    tr = cfg["truth"]
    vf = cache.get(sc.destinations[tr["dest_index"]], tr["rho"], tr["speed"], sc.hjb_grid,
                   tol=cfg["hjb"]["tol"])
    write_value_function(vf, out / "value_truth.bin")
    pc = cfg["pursuer"]
    for j, st in enumerate(sc.stations):
        svf = cache.get(st, pc["turn_radius"], pc["speed"], sc.hjb_grid, "forward", cfg["hjb"]["tol"])
        write_value_function(svf, out / f"value_station{j}.bin")
    return EXIT_OK


def _truth_obs(sc, seed, cache):
    truth = generate_truth(sc, cache)
    obs = sample_observations(truth, observation_times(sc, truth), sc.sigma, seed)
    return truth, obs


def _cmd_estimate(sc, out, seed, cache):
    truth, obs = _truth_obs(sc, seed, cache)
    _save_truth(out, truth, obs)
    post = estimate(sc, obs, cache)
    write_weights(post.samples, post.weights, out / "weights.csv")
    rv, rm = post.marginal("rho")
    doc = {"seed": seed, "destination_mass": list(post.dest_masses), "rho_values": list(rv),
           "rho_mass": list(rm), "rho_mean": post.rho_mean,
           "fits_converged": [bool(f.converged) for f in post.fits]}
    (out / "posterior.json").write_text(dumps17(doc))
    return EXIT_OK


def _cmd_baseline(sc, out, seed, cache):
    truth, obs = _truth_obs(sc, seed, cache)
    _save_truth(out, truth, obs)
    pc, bc = sc.config["pursuer"], sc.config["baseline"]
    start = bc.get("start") or [*sc.config["stations"][0]["center"], 0.0]
    ps = PursuerState.from_turn_radius(start, pc["speed"], pc["turn_radius"])
    res = run_baseline(truth, obs, ps, dt=bc["dt"], q=bc["q"], t_start=bc["launch_time"])
    write_baseline_csv(res, out / "baseline.csv")
    (out / "baseline.json").write_text(dumps17({"seed": seed, "miss_distance": res.miss_distance,
                                                "contact_radius": pc["contact_radius"]}))
    return EXIT_OK


def _dump_run(rep, out):
    art = rep.artifacts
    _save_truth(out, art["truth"], rep.observations)
    post = art["posterior"]
    write_weights(post.samples, post.weights, out / "weights.csv")
    for j, rs in enumerate(art.get("reachable", [])):
        write_reachable(rs, out / f"reachable_station{j}.json")
    if "plan" in art:
        write_plan(art["plan"], out / "plan.csv")
        belief = art["belief"]
        for k in sorted({pt.index[0] for pt in art["plan"].points}):
            write_density_csv(belief, out / f"density_slice{k:03d}.csv", k)
        for n, pp in enumerate(art.get("paths", [])):
            if pp is not None:
                np.savetxt(out / f"pursuer_path{n}.csv",
                           np.column_stack([pp.path.times, pp.path.states]), delimiter=",",
                           fmt="%.17g", header="t,x1,x2,theta", comments="")
    if "baseline" in art:
        write_baseline_csv(art["baseline"], out / "baseline.csv")
    (out / "report.json").write_text(rep.to_json())
    (out / "timings.json").write_text(json.dumps(rep.timings, indent=1, sort_keys=True) + "\n")


def _status(rep):
    return EXIT_INFEASIBLE if any(e["stage"] == "plan" for e in rep.errors) else EXIT_OK


def _cmd_plan(sc, out, seed, cache):
    rep = run_scenario(sc, seed, cache=cache, baseline=False, keep=True)
    _dump_run(rep, out)
    return _status(rep)


def _cmd_simulate(sc, out, seed, cache):
    rep = run_scenario(sc, seed, cache=cache, baseline=True, keep=True)
    _dump_run(rep, out)
    return _status(rep)


def _cmd_compare(sc, out, seed, cache):
    rep = run_scenario(sc, seed, cache=cache, baseline=True, keep=True)
    _dump_run(rep, out)
    R = sc.config["pursuer"]["contact_radius"]
    doc = {
        "seed": seed,
        "contact_radius": R,
        "planner": {"hits": rep.hits, "any_hit": bool(any(rep.hits)),
                    "truth_distances": [p["truth_distance"] for p in rep.points],
                    "predicted_success": [p["success_prob"] for p in rep.points]},
        "baseline": {"miss_distance": rep.baseline_miss, "missed": bool(rep.baseline_miss > R)},
    }
    (out / "compare.json").write_text(dumps17(doc))
    return _status(rep)


_COMMANDS = {"hjb": _cmd_hjb, "estimate": _cmd_estimate, "plan": _cmd_plan,
             "baseline": _cmd_baseline, "simulate": _cmd_simulate, "compare": _cmd_compare}


def dispatch(argv) -> int:
    """Run one subcommand; returns the exit status instead of exiting."""
    try:
        args = build_parser().parse_args(argv)
        sc = load_scenario(args.scenario)
        sc = sc.with_overrides(seed=args.seed, hjb_grid=args.grid, time_slices=args.time_slices,
                               attempts=args.attempts, sigma_r=args.sigma_r, nugget=args.nugget)
        out = args.out
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
        lock = FileLock(str(out / ".lock"), timeout=0)
        try:
            lock.acquire()
        except Timeout:
            raise ConfigError(f"output directory {out} is in use by another run") from None
        try:
            cache = ValueFunctionCache(args.cache)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                status = _COMMANDS[args.command](sc, out, sc.seed, cache)
            _write_manifest(out, args.command, sc, sc.seed)
        finally:
            lock.release()
        return status
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
