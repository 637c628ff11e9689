"""End-to-end scenarios: ground truth, observations, estimation, planning and
the reactive baseline, scored against the truth."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy import stats

from .baseline import PursuerState, run_baseline
from .errors import ConfigError, InfeasibleError
from .gp_posterior import (build_belief, cell_centres, gp_condition, log_marginal_likelihood,
                           marginal_param_posterior, param_posterior)
from .hjb import (DiskRegion, Grid, State, StationSet, extract_trajectory, pursuer_path,
                  reachable_set, read_value_function, solve_hjb, write_value_function)
from .hjb.control import Trajectory
from .kernels import KernelSpec
from .map_estimator import DubinsDynamics, Observations, ParamSample, fit_map
from .planner import plan as run_plan

__all__ = [
    "SCHEMA_VERSION",
    "SCENARIO_SCHEMA",
    "Scenario",
    "load_scenario",
    "shipped_scenario",
    "ValueFunctionCache",
    "generate_truth",
    "observation_times",
    "sample_observations",
    "rho_samples",
    "Posterior",
    "estimate",
    "RunReport",
    "run_scenario",
    "dumps17",
]

SCHEMA_VERSION = 1

_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pos = {"type": "number", "exclusiveMinimum": 0}
_disk = {
    "type": "object",
    "required": ["center", "radius"],
    "properties": {"center": _vec2, "radius": _pos},
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "destinations", "truth", "observations", "stations", "pursuer"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "notes": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "domain": {
            "type": "object",
            "properties": {"lower": _vec2, "upper": _vec2},
            "additionalProperties": False,
        },
        "destinations": {"type": "array", "items": _disk, "minItems": 1},
        "truth": {
            "type": "object",
            "required": ["rho", "dest_index", "start"],
            "properties": {"rho": _pos, "dest_index": {"type": "integer", "minimum": 0},
                           "start": _vec3, "speed": _pos, "dt": _pos},
            "additionalProperties": False,
        },
        "observations": {
            "type": "object",
            "required": ["sigma"],
            "properties": {
                "sigma": {"type": "number", "minimum": 0},
                "count": {"type": "integer", "minimum": 0},
                "fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "times": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
            "additionalProperties": False,
        },
        "prior": {
            "type": "object",
            "properties": {"rho_mean": _pos, "rho_std": _pos, "rho_min": _pos,
                           "n_rho": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "kernels": {
            "type": "object",
            "properties": {
                "map_lengthscale": _pos, "map_output_scale": _pos, "gp_lengthscale": _pos,
                "gp_output_scale": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "nugget": {"type": "number", "minimum": 0}, "smoothing": _pos,
                "n_collocation": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "stations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["center", "radius"],
                "properties": {"center": _vec2, "radius": _pos,
                               "headings": {"type": ["array", "null"], "items": {"type": "number"}}},
                "additionalProperties": False,
            },
        },
        "pursuer": {
            "type": "object",
            "required": ["speed", "turn_radius", "contact_radius"],
            "properties": {
                "speed": _pos, "turn_radius": _pos, "contact_radius": _pos,
                "angle_filter": {"enum": ["free", "perpendicular"]},
            },
            "additionalProperties": False,
        },
        "planner": {
            "type": "object",
            "properties": {
                "attempts": {"type": "integer", "minimum": 0},
                "sigma_r": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "window": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "time_slices": {"type": "integer", "minimum": 2},
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 3},
                         "minItems": 2, "maxItems": 2},
                "horizon": _pos,
                "min_weight": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "hjb": {
            "type": "object",
            "properties": {
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 3},
                         "minItems": 3, "maxItems": 3},
                "tol": _pos,
            },
            "additionalProperties": False,
        },
        "baseline": {
            "type": "object",
            "properties": {"start": _vec3, "q": {"type": "number", "minimum": 0}, "dt": _pos,
                           "launch_time": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
        },
    },
}

DEFAULTS = {
    "name": "unnamed",
    "seed": 0,
    "domain": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
    "truth": {"speed": 1.0, "dt": 1e-3},
    "observations": {"count": 6, "fraction": 0.4},
    "prior": {"rho_mean": 0.05, "rho_std": 0.02, "rho_min": 0.01, "n_rho": 7},
    "kernels": {"map_lengthscale": 0.05, "map_output_scale": 1.0, "gp_lengthscale": 0.1,
                "gp_output_scale": None, "nugget": 1e-8, "smoothing": 1e-2, "n_collocation": 40},
    "pursuer": {"angle_filter": "free"},
    "planner": {"attempts": 5, "sigma_r": None, "window": None, "time_slices": 64,
                "grid": [101, 101], "horizon": 1.0, "min_weight": 1e-3},
    "hjb": {"grid": [101, 101, 64], "tol": 1e-6},
    "baseline": {"q": 1.0, "dt": 1e-3, "launch_time": 0.0},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class Scenario:
    """Validated experiment configuration (a nested dict with defaults filled)."""

    config: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            jsonschema.validate(doc, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"scenario invalid at {where}: {exc.message}") from None
        cfg = _merge(DEFAULTS, doc)
        sc = cls(cfg)
        sc._check()
        return sc

    def _check(self):
        lo, hi = self.domain
        if not all(h > l for l, h in zip(lo, hi)):
            raise ConfigError("domain upper bounds must exceed lower bounds")

        def inside(c, r, what):
            if not (lo[0] <= c[0] - r and c[0] + r <= hi[0] and lo[1] <= c[1] - r and c[1] + r <= hi[1]):
                raise ConfigError(f"{what} at {tuple(c)} with radius {r} leaves the domain")

        for n, d in enumerate(self.config["destinations"]):
            inside(d["center"], d["radius"], f"destination {n}")
        for n, s in enumerate(self.config["stations"]):
            inside(s["center"], s["radius"], f"station {n}")
        if self.config["truth"]["dest_index"] >= len(self.config["destinations"]):
            raise ConfigError("truth.dest_index does not name a destination")
        st = self.config["truth"]["start"]
        if not (lo[0] <= st[0] <= hi[0] and lo[1] <= st[1] <= hi[1]):
            raise ConfigError("truth.start lies outside the domain")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.config)

    def with_overrides(self, **kw) -> "Scenario":
        """Return a copy with CLI-style overrides applied (``None`` is ignored)."""
        doc = self.to_dict()
        mapping = {
            "seed": ("seed",),
            "hjb_grid": ("hjb", "grid"),
            "time_slices": ("planner", "time_slices"),
            "attempts": ("planner", "attempts"),
            "sigma_r": ("planner", "sigma_r"),
            "nugget": ("kernels", "nugget"),
            "angle_filter": ("pursuer", "angle_filter"),
        }
        for key, value in kw.items():
            if value is None:
                continue
            if key not in mapping:
                raise ConfigError(f"unknown override {key!r}")
            node = doc
            path = mapping[key]
            for p in path[:-1]:
                node = node[p]
            node[path[-1]] = list(value) if isinstance(value, tuple) else value
        return Scenario.from_dict(doc)

    # convenience accessors
    @property
    def domain(self):
        d = self.config["domain"]
        return tuple(d["lower"]), tuple(d["upper"])

    @property
    def destinations(self) -> list:
        return [DiskRegion(tuple(d["center"]), d["radius"]) for d in self.config["destinations"]]

    @property
    def stations(self) -> list:
        out = []
        for s in self.config["stations"]:
            hs = s.get("headings")
            out.append(StationSet(tuple(s["center"]), s["radius"], None if hs is None else tuple(hs)))
        return out

    @property
    def sigma(self) -> float:
        return float(self.config["observations"]["sigma"])

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def hjb_grid(self) -> Grid:
        lo, hi = self.domain
        return Grid(tuple(self.config["hjb"]["grid"]), lo, hi)

    @property
    def true_param(self) -> ParamSample:
        t = self.config["truth"]
        return ParamSample(t["rho"], t["dest_index"])

    @property
    def start(self) -> State:
        return State(*self.config["truth"]["start"])


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from None
    return Scenario.from_dict(doc)


def shipped_scenario(name: str = "slow_pursuer") -> Scenario:
    """Load one of the scenario files bundled with the package."""
    ref = resources.files("rendezvous") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise ConfigError(f"no shipped scenario named {name!r}")
    return Scenario.from_dict(json.loads(ref.read_text()))


class ValueFunctionCache:
    """Solve-once store for value functions, keyed by a hash of the problem.

    Entries live under ``root`` (default ``$RENDEZVOUS_CACHE`` or
    ``~/.cache/rendezvous``); ``root=False`` keeps them in memory only.
    """

    def __init__(self, root=None):
        if root is None:
            root = os.environ.get("RENDEZVOUS_CACHE", Path.home() / ".cache" / "rendezvous")
        self.root = None if root is False else Path(root)
        self._mem = {}

    @staticmethod
    def key(target, turn_radius, speed, grid: Grid, direction, tol) -> str:
        doc = {"target": target.to_dict(), "rho": float(turn_radius), "v": float(speed),
               "grid": grid.to_dict(), "direction": direction, "tol": float(tol), "v1": 1}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:24]

    def get(self, target, turn_radius, speed, grid: Grid, direction="backward", tol=1e-6):
        k = self.key(target, turn_radius, speed, grid, direction, tol)
        if k in self._mem:
            return self._mem[k]
        vf = None
        if self.root is not None:
            path = self.root / f"{k}.bin"
            if path.exists() and path.with_name(path.name + ".json").exists():
                try:
                    vf = read_value_function(path)
                except (OSError, ValueError, KeyError):
                    vf = None
        if vf is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                vf = solve_hjb(target, turn_radius, speed, grid, direction=direction, tol=tol)
            if self.root is not None:
                self.root.mkdir(parents=True, exist_ok=True)
                tmp = self.root / f"{k}.{os.getpid()}.tmp"
                data, side = write_value_function(vf, tmp)
                os.replace(side, self.root / f"{k}.bin.json")
                os.replace(data, self.root / f"{k}.bin")
        self._mem[k] = vf
        return vf


def generate_truth(scenario: Scenario, cache: ValueFunctionCache | None = None) -> Trajectory:
    """Time-optimal path of the true hypothesis from the scenario's start."""
    cache = cache or ValueFunctionCache(False)
    t = scenario.config["truth"]
    dest = scenario.destinations[t["dest_index"]]
    vf = cache.get(dest, t["rho"], t["speed"], scenario.hjb_grid, tol=scenario.config["hjb"]["tol"])
    traj = extract_trajectory(vf, scenario.start, dt=t["dt"])
    if not traj.reached:
        raise InfeasibleError("the true target never reaches its destination on this grid")
    return traj


def observation_times(scenario: Scenario, truth: Trajectory) -> np.ndarray:
    o = scenario.config["observations"]
    if "times" in o:
        return np.asarray(o["times"], dtype=float)
    return np.linspace(0.0, o["fraction"] * truth.duration, o["count"])


def sample_observations(truth: Trajectory, times, sigma, seed) -> Observations:
    """Gaussian readings of ``(x1, x2, theta)``; headings are wrapped to
    ``(-pi, pi]`` after perturbation."""
    times = np.asarray(times, dtype=float)
    if times.size and (times.min() < truth.times[0] - 1e-12 or times.max() > truth.times[-1] + 1e-12):
        raise ValueError("observation times must lie within the truth's time span")
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (3,))
    rng = np.random.default_rng(seed)
    z = truth.at(times).reshape(-1, 3)
    y = z + rng.standard_normal(z.shape) * sig
    y[:, 2] = np.angle(np.exp(1j * y[:, 2]))
    # zero noise still needs a positive sigma for the estimators downstream
    return Observations(times, y, np.where(sig > 0, sig, 1e-6))


def rho_samples(prior: dict) -> np.ndarray:
    """Equal-probability quantiles of the truncated Gaussian turning-radius prior."""
    m, s, lo, n = prior["rho_mean"], prior["rho_std"], prior["rho_min"], prior["n_rho"]
    a = (lo - m) / s
    q = (np.arange(n) + 0.5) / n
    return stats.truncnorm.ppf(q, a, np.inf, loc=m, scale=s)


class ArrivedMean:
    """MAP trajectory held at the first point where it enters its destination,
    mirroring a target that stops once it has arrived."""

    def __init__(self, fit, dest: DiskRegion, horizon: float, dt: float = 1e-3):
        self.fit = fit
        ts = np.arange(0.0, horizon + 0.5 * dt, dt)
        z = fit(ts)
        inside = np.hypot(z[:, 0] - dest.center[0], z[:, 1] - dest.center[1]) <= dest.radius
        self.arrival = float(ts[np.argmax(inside)]) if inside.any() else math.inf

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.fit(np.minimum(t, self.arrival))


@dataclass
class Posterior:
    samples: list
    fits: list
    gps: list
    log_likelihoods: np.ndarray
    weights: np.ndarray

    def marginal(self, axis):
        return marginal_param_posterior(axis, self.samples, self.log_likelihoods)

    @property
    def dest_masses(self) -> np.ndarray:
        vals, mass = self.marginal("dest")
        out = np.zeros(max(s.dest_index for s in self.samples) + 1)
        out[vals.astype(int)] = mass
        return out

    @property
    def rho_mean(self) -> float:
        return float(sum(w * s.rho for w, s in zip(self.weights, self.samples)))


def estimate(scenario: Scenario, obs: Observations, cache: ValueFunctionCache | None = None,
             horizon: float | None = None) -> Posterior:
    """Fit every hypothesis, condition its GP and weight it by evidence."""
    cache = cache or ValueFunctionCache(False)
    cfg = scenario.config
    kc = cfg["kernels"]
    horizon = cfg["planner"]["horizon"] if horizon is None else horizon
    speed = cfg["truth"]["speed"]
    map_spec = KernelSpec(kc["map_lengthscale"], kc["map_output_scale"])
    gp_scale = kc["gp_output_scale"] or scenario.sigma**2
    gp_spec = KernelSpec(kc["gp_lengthscale"], gp_scale)
    samples, fits, gps, ll = [], [], [], []
    for rho in rho_samples(cfg["prior"]):
        for d, dest in enumerate(scenario.destinations):
            p = ParamSample(float(rho), d)
            vf = cache.get(dest, p.rho, speed, scenario.hjb_grid, tol=cfg["hjb"]["tol"])
            dyn = DubinsDynamics(vf, kc["smoothing"])
            fit = fit_map(obs, dyn, specs=map_spec, horizon=horizon,
                          n_collocation=kc["n_collocation"], nugget=kc["nugget"], param=p,
                          warn=False)
            mean = ArrivedMean(fit, dest, horizon)
            gp = gp_condition(mean, obs.times, obs.values, gp_spec, obs.sigma[:2], param=p)
            samples.append(p)
            fits.append(fit)
            gps.append(gp)
            ll.append(log_marginal_likelihood(obs.times, obs.values, mean, gp_spec, obs.sigma[:2]))
    ll = np.array(ll)
    return Posterior(samples, fits, gps, ll, param_posterior(samples, ll))


def dumps17(obj, indent: int = 1) -> str:
    """JSON text with every float written to 17 significant digits."""

    def enc(o, lvl):
        pad = " " * (indent * (lvl + 1))
        end = " " * (indent * lvl)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, lvl + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple)) for v in o):
                return "[" + ", ".join(enc(v, lvl + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, lvl + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            o = float(o)
            if math.isnan(o):
                return "NaN"
            if math.isinf(o):
                return "Infinity" if o > 0 else "-Infinity"
            return format(o, ".17g")
        if o is None:
            return "null"
        return json.dumps(o)

    return enc(obj, 0) + "\n"


@dataclass
class RunReport:
    """Outcome of one scenario run.  ``timings`` (wall clock per stage) is
    kept out of :meth:`to_dict` so that reports are reproducible."""

    scenario: dict
    seed: int
    observations: Observations
    dest_masses: np.ndarray
    rho_values: np.ndarray
    rho_masses: np.ndarray
    rho_mean: float
    weights: np.ndarray
    samples: list
    points: list = field(default_factory=list)
    conditional_failures: list = field(default_factory=list)
    plan_failure: float | None = None
    baseline_miss: float | None = None
    truth_duration: float = 0.0
    available_from: float = 0.0
    gap_cells: list = field(default_factory=list)
    fit_converged: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def hits(self) -> list:
        return [p["hit"] for p in self.points]

    @property
    def true_dest_is_map(self) -> bool:
        return int(np.argmax(self.dest_masses)) == self.scenario["truth"]["dest_index"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario.get("name", "unnamed"),
            "seed": self.seed,
            "truth_duration": self.truth_duration,
            "available_from": self.available_from,
            "posterior": {
                "destination_mass": [float(v) for v in self.dest_masses],
                "rho_values": [float(v) for v in self.rho_values],
                "rho_mass": [float(v) for v in self.rho_masses],
                "rho_mean": self.rho_mean,
                "weights": [{"rho": s.rho, "dest_index": s.dest_index, "weight": float(w)}
                            for s, w in zip(self.samples, self.weights)],
                "fits_converged": self.fit_converged,
            },
            "plan": {
                "points": self.points,
                "conditional_failures": [float(q) for q in self.conditional_failures],
                "failure_probability": self.plan_failure,
                "any_hit": bool(any(self.hits)) if self.points else None,
                "gap_cells": self.gap_cells,
            },
            "baseline": {"miss_distance": self.baseline_miss},
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def _perp_means(belief, min_weight):
    keep = belief.weights >= min_weight
    if not keep.any():
        keep = belief.weights == belief.weights.max()
    return belief.means[keep]


def run_scenario(scenario: Scenario, seed: int | None = None, *,
                 cache: ValueFunctionCache | None = None, baseline: bool = True,
                 keep: bool = False) -> RunReport:
    """Run truth, observation, estimation, planning and the baseline.

    Stage failures are recorded in ``report.errors`` as ``{"stage", "message"}``
    entries; an infeasible plan leaves the points found so far in the report.
    With ``keep=True`` the intermediate objects are attached to
    ``report.artifacts`` for inspection and dumping.
    """
    cfg = scenario.config
    seed = scenario.seed if seed is None else int(seed)
    cache = cache or ValueFunctionCache()
    timings = {}
    art = {}

    def tick(name, t0):
        timings[name] = time.perf_counter() - t0

    t0 = time.perf_counter()
    truth = generate_truth(scenario, cache)
    tick("truth", t0)

    t0 = time.perf_counter()
    times = observation_times(scenario, truth)
    obs = sample_observations(truth, times, scenario.sigma, seed)
    t_avail = float(times[-1]) if times.size else 0.0
    tick("observations", t0)

    t0 = time.perf_counter()
    post = estimate(scenario, obs, cache)
    rv, rm = post.marginal("rho")
    tick("estimation", t0)
    report = RunReport(cfg, seed, obs, post.dest_masses, rv, rm, post.rho_mean, post.weights,
                       post.samples, truth_duration=truth.duration, available_from=t_avail,
                       fit_converged=[bool(f.converged) for f in post.fits], timings=timings)
    art.update(truth=truth, posterior=post)

    pc, pl = cfg["pursuer"], cfg["planner"]
    R = pc["contact_radius"]
    if pl["attempts"] > 0 and pl["horizon"] <= t_avail:
        report.errors.append({"stage": "plan", "message":
                              f"planning horizon {pl['horizon']:g} ends before the pursuer is "
                              f"available at t = {t_avail:g}; the reachable set is empty"})
    elif pl["attempts"] > 0:
        t0 = time.perf_counter()
        lo, hi = scenario.domain
        n1, n2 = pl["grid"]
        x1 = cell_centres(lo[0], hi[0], n1)
        x2 = cell_centres(lo[1], hi[1], n2)
        ts = np.linspace(t_avail, pl["horizon"], pl["time_slices"])
        belief = build_belief(post.gps, post.weights, ts, x1, x2)
        tick("belief", t0)

        t0 = time.perf_counter()
        means = _perp_means(belief, pl["min_weight"]) if pc["angle_filter"] == "perpendicular" else None
        station_vfs, rsets = [], []
        for s, st in enumerate(scenario.stations):
            vf = cache.get(st, pc["turn_radius"], pc["speed"], scenario.hjb_grid, "forward",
                           cfg["hjb"]["tol"])
            station_vfs.append(vf)
            rsets.append(reachable_set(vf, ts, x1, x2, pc["angle_filter"], means, s, t_avail))
        report.gap_cells = [int(rs.gaps().sum()) for rs in rsets]
        tick("reachability", t0)
        art.update(belief=belief, reachable=rsets, station_vfs=station_vfs)

        t0 = time.perf_counter()
        try:
            res = run_plan(belief, R, pl["attempts"], rsets, pl["sigma_r"], pl["window"])
        except InfeasibleError as exc:
            report.errors.append({"stage": "plan", "message": str(exc)})
            res = getattr(exc, "partial", None)
        tick("plan", t0)
        if res is not None:
            art["plan"] = res
            paths = []
            for pt in res.points:
                zt = truth.at(pt.t)
                dist = float(math.hypot(zt[0] - pt.x[0], zt[1] - pt.x[1]))
                entry = {"t": pt.t, "x1": pt.x[0], "x2": pt.x[1], "radius": pt.radius,
                         "station": pt.station_id, "launch_time": pt.launch_time,
                         "heading": pt.heading, "success_prob": pt.success_prob,
                         "truth_distance": dist, "hit": dist <= pt.radius}
                report.points.append(entry)
                try:
                    pp = pursuer_path(station_vfs[pt.station_id], pt.t, pt.x, pt.heading,
                                      station_id=pt.station_id, available_from=t_avail,
                                      slack_tol=1e-6)
                    paths.append(pp)
                except InfeasibleError as exc:
                    report.errors.append({"stage": "pursuer_path", "message": str(exc)})
                    paths.append(None)
            report.conditional_failures = list(res.conditional_failures)
            report.plan_failure = res.failure_probability
            art["paths"] = paths

    if baseline:
        t0 = time.perf_counter()
        bc = cfg["baseline"]
        start = bc.get("start")
        if start is None:
            c = cfg["stations"][0]["center"]
            start = [c[0], c[1], 0.0]
        ps = PursuerState.from_turn_radius(start, pc["speed"], pc["turn_radius"])
        bres = run_baseline(truth, obs, ps, dt=bc["dt"], q=bc["q"], t_start=bc["launch_time"])
        report.baseline_miss = bres.miss_distance
        art["baseline"] = bres
        tick("baseline", t0)

    if keep:
        report.artifacts = art
    return report
