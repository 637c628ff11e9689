"""Minimum-arrival-time value functions for the Dubins car on a periodic-heading grid."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from . import _interp, _sweep

TWO_PI = 2.0 * math.pi
# nodes sitting on a region boundary belong to the region
_NODE_TOL = 1e-6
# absolute slack for point queries on a region boundary
_CONTAIN_TOL = 1e-12

__all__ = [
    "State",
    "Grid",
    "DiskRegion",
    "StationSet",
    "ValueFunction",
    "solve_hjb",
    "wrap_angle",
]


def wrap_angle(theta):
    """Map headings to ``[0, 2 pi)``."""
    out = np.mod(theta, TWO_PI)
    # np.mod can round tiny negative inputs up to exactly 2 pi
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class State:
    x1: float
    x2: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x2) and math.isfinite(self.theta)):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.theta])


@dataclass(frozen=True)
class Grid:
    """Uniform nodes over ``[lower, upper]^2 x [0, 2 pi)`` (heading periodic)."""

    shape: tuple = (101, 101, 64)
    lower: tuple = (0.0, 0.0)
    upper: tuple = (1.0, 1.0)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or min(shape) < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if not all(u > l for l, u in zip(self.lower, self.upper)):
            raise ValueError("upper bounds must exceed lower bounds")

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(self.lower[0], self.upper[0], self.shape[0])

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(self.lower[1], self.upper[1], self.shape[1])

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.shape[2]) / self.shape[2]

    @property
    def spacing(self) -> tuple:
        return (
            (self.upper[0] - self.lower[0]) / (self.shape[0] - 1),
            (self.upper[1] - self.lower[1]) / (self.shape[1] - 1),
            TWO_PI / self.shape[2],
        )

    @property
    def cell_width(self) -> float:
        return max(self.spacing[:2])

    def contains(self, x1, x2, atol=1e-9):
        x1 = np.asarray(x1)
        x2 = np.asarray(x2)
        return (
            (x1 >= self.lower[0] - atol) & (x1 <= self.upper[0] + atol)
            & (x2 >= self.lower[1] - atol) & (x2 <= self.upper[1] + atol)
        )

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class DiskRegion:
    """Destination disk; any arrival heading is accepted."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")

    def contains(self, x1, x2, theta=None):
        return np.hypot(np.asarray(x1) - self.center[0], np.asarray(x2) - self.center[1]) <= self.radius + _CONTAIN_TOL

    def node_mask(self, grid: Grid) -> np.ndarray:
        X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
        inside = np.hypot(X1 - self.center[0], X2 - self.center[1]) <= self.radius + _NODE_TOL * grid.cell_width
        return np.repeat(inside[:, :, None], grid.shape[2], axis=2)

    def to_dict(self) -> dict:
        return {"kind": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class StationSet:
    """Launch set of a base station: a disk of positions and an optional list
    of admissible launch headings (``None`` = unrestricted)."""

    center: tuple
    radius: float
    headings: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.headings is not None:
            hs = tuple(float(wrap_angle(h)) for h in self.headings)
            if not hs:
                raise ValueError("headings must be None or non-empty")
            object.__setattr__(self, "headings", hs)

    def _heading_ok(self, theta, tol):
        if self.headings is None:
            return np.ones(np.shape(theta), dtype=bool)
        theta = np.asarray(theta, dtype=float)
        ok = np.zeros(theta.shape, dtype=bool)
        for h in self.headings:
            d = np.abs((theta - h + math.pi) % TWO_PI - math.pi)
            ok |= d <= tol
        return ok

    def contains(self, x1, x2, theta=None, heading_tol=1e-9):
        inside = np.hypot(np.asarray(x1) - self.center[0], np.asarray(x2) - self.center[1]) <= self.radius + _CONTAIN_TOL
        if theta is None or self.headings is None:
            return inside
        return inside & self._heading_ok(theta, heading_tol)

    def node_mask(self, grid: Grid) -> np.ndarray:
        X1, X2 = np.meshgrid(grid.x1, grid.x2, indexing="ij")
        inside = np.hypot(X1 - self.center[0], X2 - self.center[1]) <= self.radius + _NODE_TOL * grid.cell_width
        ok = self._heading_ok(grid.theta, 0.5 * grid.spacing[2] * (1 - 1e-9))
        if self.headings is not None and not ok.any():
            raise ValueError("no grid heading matches the station's launch headings")
        return inside[:, :, None] & ok[None, None, :]

    def to_dict(self) -> dict:
        return {
            "kind": "station",
            "center": list(self.center),
            "radius": self.radius,
            "headings": None if self.headings is None else list(self.headings),
        }


@dataclass
class ValueFunction:
    """Gridded minimum-time field ``u[i1, i2, k]``.

    ``direction='backward'`` stores time-to-reach the target set;
    ``direction='forward'`` stores time-from-the-target-set (used for launch
    stations: the time a pursuer needs to attain each configuration).
    Unreached nodes hold ``inf``.
    """

    values: np.ndarray
    grid: Grid
    target: DiskRegion | StationSet
    speed: float
    turn_radius: float
    direction: str = "backward"
    rounds: int = 0
    residual: float = 0.0
    converged: bool = True
    _theta_scale: float | None = field(default=None, repr=False)

    @property
    def flow_sign(self) -> float:
        return 1.0 if self.direction == "backward" else -1.0

    def __call__(self, x1, x2, theta):
        return interpolate(self.values, self.grid, x1, x2, theta)

    def eval_state(self, s: State) -> float:
        return float(self(s.x1, s.x2, s.theta))

    def theta_derivative(self, x1, x2, theta):
        """Centered difference ``du/dtheta`` with a one-cell heading step."""
        h = self.grid.spacing[2]
        return (self(x1, x2, np.asarray(theta) + h) - self(x1, x2, np.asarray(theta) - h)) / (2.0 * h)

    @property
    def theta_slope_scale(self) -> float:
        """Median |du/dtheta| over reached, non-target nodes."""
        if self._theta_scale is None:
            u = self.values
            d = (np.roll(u, -1, axis=2) - np.roll(u, 1, axis=2)) / (2.0 * self.grid.spacing[2])
            mask = np.isfinite(d) & (u > 0)
            vals = np.abs(d[mask])
            vals = vals[vals > 0]
            self._theta_scale = float(np.median(vals)) if vals.size else self.turn_radius / self.speed
        return self._theta_scale

    def min_over_heading(self, x1, x2):
        """``min_theta u(x, theta)`` over grid headings."""
        x1 = np.asarray(x1, dtype=float)
        out = np.full(np.broadcast(x1, x2).shape, np.inf)
        for th in self.grid.theta:
            out = np.minimum(out, self(x1, x2, np.full(out.shape, th)))
        return out

    def metadata(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "target": self.target.to_dict(),
            "speed": self.speed,
            "turn_radius": self.turn_radius,
            "direction": self.direction,
            "rounds": self.rounds,
            "residual": self.residual,
            "converged": self.converged,
            "layout": "float64 little-endian, x1 fastest then x2 then theta",
        }


def interpolate(values, grid: Grid, x1, x2, theta):
    """Trilinear interpolation, periodic in heading.

    Corners carrying zero weight are ignored; any unreached corner with
    positive weight makes the result ``inf``.  Queries within round-off of a
    node return the nodal value exactly.
    """
    x1, x2, theta = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float),
                                        np.asarray(theta, dtype=float))
    if not np.all(grid.contains(x1, x2)):
        raise ValueError("query position outside the grid domain")
    h1, h2, ht = grid.spacing
    out = _interp.interp_many(values, grid.lower[0], grid.lower[1], h1, h2, ht,
                              x1.ravel(), x2.ravel(), theta.ravel()).reshape(x1.shape)
    return out if out.ndim else float(out)


_UNREACHED_FACTOR = 100.0


def _horizon_bound(grid, rho, speed):
    """Generous bound on any in-domain minimum time (diagonal plus two loops)."""
    diag = math.hypot(grid.upper[0] - grid.lower[0], grid.upper[1] - grid.lower[1])
    return (diag + 4.0 * math.pi * rho) / speed


def solve_hjb(target, turn_radius: float, speed: float, grid: Grid | None = None, *,
              direction: str = "backward", tol: float = 1e-6, max_rounds: int = 400) -> ValueFunction:
    """Solve the stationary Dubins HJB equation by upwind fast sweeping.

    Parameters
    ----------
    target : DiskRegion or StationSet
        Zero-level set of the value function.
    turn_radius, speed : float
        Minimum turning radius and constant speed of the vehicle.
    grid : Grid, optional
        Defaults to 101 x 101 x 64 over the unit square.
    direction : {'backward', 'forward'}
        ``backward`` gives time to reach ``target``; ``forward`` gives the time
        needed to reach each configuration starting from ``target``.
    """
    if not turn_radius > 0:
        raise ValueError(f"turn_radius must be > 0, got {turn_radius}")
    if not speed > 0:
        raise ValueError(f"speed must be > 0, got {speed}")
    if direction not in ("backward", "forward"):
        raise ValueError(f"direction must be 'backward' or 'forward', got {direction!r}")
    grid = grid or Grid()
    frozen = target.node_mask(grid)
    if not frozen.any():
        raise ValueError("target set contains no grid node; refine the grid or enlarge the target")
    # value iteration from a finite upper bound; inf-initialised sweeps can
    # never ground nodes whose discrete successors form heading cycles
    big = _UNREACHED_FACTOR * _horizon_bound(grid, turn_radius, speed)
    u = np.full(grid.shape, big)
    u[frozen] = 0.0
    th = grid.theta
    h1, h2, ht = grid.spacing
    flow = 1.0 if direction == "backward" else -1.0
    args = (np.cos(th), np.sin(th), h1, h2, ht, float(speed), float(turn_radius), flow)
    rounds, change = _sweep.sweep(u, frozen, *args, float(tol), int(max_rounds))
    res = _sweep.residual(u, frozen, *args)
    u[u >= 0.5 * big] = np.inf
    converged = change < tol
    if not converged:
        warnings.warn(
            f"HJB sweeps did not converge after {rounds} rounds (max residual {res:.3e}); "
            "configuration may be unreachable or the grid too coarse",
            ConvergenceWarning,
        )
    return ValueFunction(u, grid, target, float(speed), float(turn_radius), direction,
                         rounds=int(rounds), residual=float(res), converged=bool(converged))
