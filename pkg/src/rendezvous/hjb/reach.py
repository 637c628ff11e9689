"""Station reachability masks and pursuer paths from forward value functions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleError
from .control import Trajectory, extract_trajectory
from .solver import State, ValueFunction, wrap_angle

__all__ = ["ReachableSet", "reachable_set", "PursuerPlan", "pursuer_path"]

_FILTERS = ("free", "perpendicular")


@dataclass
class ReachableSet:
    """Boolean feasibility over ``(time slice, x1 cell, x2 cell)``.

    ``contact_heading`` holds the heading the pursuer arrives with (the best
    grid heading for the free filter) and ``required_time`` the matching
    value ``u_station(x, heading)``.
    """

    mask: np.ndarray
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    contact_heading: np.ndarray
    required_time: np.ndarray
    station_id: int = 0
    angle_filter: str = "free"
    available_from: float = 0.0

    @property
    def slack(self) -> np.ndarray:
        return self.times[:, None, None] - self.available_from - self.required_time

    def gaps(self) -> np.ndarray:
        """Cells that are reachable at some slice, unreachable later, then
        reachable again."""
        m = self.mask
        seen = np.logical_or.accumulate(m, axis=0)
        later = np.logical_or.accumulate(m[::-1], axis=0)[::-1]
        return np.any(seen & ~m & later, axis=0)


def _free_field(u: ValueFunction, X1, X2):
    best = np.full(X1.shape, np.inf)
    arg = np.zeros(X1.shape)
    for th in u.grid.theta:
        val = u(X1, X2, np.full(X1.shape, th))
        better = val < best
        best = np.where(better, val, best)
        arg = np.where(better, th, arg)
    return best, arg


def reachable_set(u_station: ValueFunction, times, x1, x2, angle_filter: str = "free",
                  mean_trajectories=None, station_id: int = 0,
                  available_from: float = 0.0) -> ReachableSet:
    """Cells a pursuer from the station can occupy at each time.

    Parameters
    ----------
    u_station : ValueFunction
        Forward solve from the station's launch set.
    times : array_like, shape (K,)
        Absolute slice times; the pursuer may launch no earlier than
        ``available_from``.
    x1, x2 : array_like
        Cell-centre coordinates of the planner grid.
    angle_filter : {'free', 'perpendicular'}
    mean_trajectories : array_like, shape (P, K, 3), optional
        Mean ``(x1, x2, heading)`` of each retained hypothesis at each slice;
        required for the perpendicular filter.  Every cell is matched with the
        closest mean point at that slice and must be reached with a heading
        at right angles to it (either side).
    """
    if angle_filter not in _FILTERS:
        raise ValueError(f"angle_filter must be one of {_FILTERS}, got {angle_filter!r}")
    if u_station.direction != "forward":
        raise ValueError("station value functions must be solved with direction='forward'")
    times = np.asarray(times, dtype=float).ravel()
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    K = times.size
    budget = times - available_from

    if angle_filter == "free":
        best, arg = _free_field(u_station, X1, X2)
        req = np.broadcast_to(best, (K,) + best.shape).copy()
        head = np.broadcast_to(arg, (K,) + arg.shape).copy()
    else:
        if mean_trajectories is None or np.size(mean_trajectories) == 0:
            raise ValueError("the perpendicular filter needs at least one mean trajectory")
        means = np.asarray(mean_trajectories, dtype=float)
        if means.ndim == 2:
            means = means[None]
        if means.shape[1] != K or means.shape[2] != 3:
            raise ValueError(f"mean_trajectories must have shape (P, {K}, 3), got {means.shape}")
        req = np.empty((K,) + X1.shape)
        head = np.empty((K,) + X1.shape)
        for k in range(K):
            d2 = (X1[None] - means[:, k, 0, None, None]) ** 2 + (X2[None] - means[:, k, 1, None, None]) ** 2
            nearest = np.argmin(d2, axis=0)
            h = means[nearest, k, 2] if means.shape[0] > 1 else np.full(X1.shape, means[0, k, 2])
            left = wrap_angle(h + 0.5 * math.pi)
            right = wrap_angle(h - 0.5 * math.pi)
            ul = u_station(X1, X2, left)
            ur = u_station(X1, X2, right)
            use_left = ul <= ur
            req[k] = np.where(use_left, ul, ur)
            head[k] = np.where(use_left, left, right)

    mask = req <= budget[:, None, None]
    return ReachableSet(mask, times, x1, x2, head, req, int(station_id), angle_filter,
                        float(available_from))


@dataclass
class PursuerPlan:
    station_id: int
    launch_time: float
    arrival_time: float
    path: Trajectory

    @property
    def arrival_heading(self) -> float:
        return float(wrap_angle(self.path.states[-1, 2]))


def pursuer_path(u_station: ValueFunction, t: float, x, heading: float, *, station_id: int = 0,
                 available_from: float = 0.0, dt: float = 1e-3, slack_tol: float = 1e-9) -> PursuerPlan:
    """Launch time and optimal path that brings a pursuer to ``(x, heading)`` at ``t``.

    The path is integrated backwards from the rendezvous state down the
    station's forward value function and then reversed, so ``path.times`` runs
    from launch to ``t``.
    """
    if u_station.direction != "forward":
        raise ValueError("station value functions must be solved with direction='forward'")
    s = State(float(x[0]), float(x[1]), float(heading))
    need = u_station.eval_state(s)
    launch = float(t) - need
    if not math.isfinite(need) or launch < available_from - slack_tol:
        raise InfeasibleError(
            f"rendezvous at t={t:.6g}, x=({s.x1:.4g}, {s.x2:.4g}) needs {need:.6g} time units "
            f"but only {t - available_from:.6g} are available")
    back = extract_trajectory(u_station, s, dt=dt)
    times = float(t) - back.times[::-1]
    states = back.states[::-1].copy()
    return PursuerPlan(int(station_id), launch, float(t), Trajectory(times, states, back.reached))
