"""Greedy rendezvous planning over a gridded belief.

Each step picks the reachable grid point with the smallest probability that
the target is farther than ``R`` from it, then conditions the belief on that
attempt failing: hypothesis weights are scaled by their out-of-disc mass and
every density slice is multiplied by a suppression factor centred on the
point.  The product of the per-step conditional failure probabilities is the
plan's overall failure probability.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ._validation import check_positive
from .errors import InfeasibleError
from .gp_posterior import Belief

__all__ = [
    "RendezvousPoint",
    "PlanResult",
    "disc_footprint",
    "disc_mass",
    "failure_field",
    "select_rendezvous",
    "suppression",
    "update_on_failure",
    "assign_pursuers",
    "plan",
    "write_plan",
]

_MEMBER_TOL = 1e-9


@dataclass
class RendezvousPoint:
    """A planned contact attempt at grid index ``index = (k, i, j)``."""

    t: float
    x: tuple
    radius: float
    index: tuple
    success_prob: float
    heading: float | None = None
    station_id: int | None = None
    launch_time: float | None = None

    def __post_init__(self):
        check_positive("radius", self.radius)


@dataclass
class PlanResult:
    points: list
    conditional_failures: list
    belief: Belief
    diagnostics: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def failure_probability(self) -> float:
        return float(np.prod(self.conditional_failures)) if self.conditional_failures else 1.0

    @property
    def cumulative_failures(self) -> np.ndarray:
        return np.cumprod(self.conditional_failures)


def disc_footprint(R: float, h1: float, h2: float) -> np.ndarray:
    """Cells whose centres lie within ``R`` of a given cell centre."""
    n1 = int(math.floor(R / h1 + 1e-9))
    n2 = int(math.floor(R / h2 + 1e-9))
    d1 = np.arange(-n1, n1 + 1) * h1
    d2 = np.arange(-n2, n2 + 1) * h2
    return d1[:, None] ** 2 + d2[None, :] ** 2 <= R * R * (1 + _MEMBER_TOL)


def _check_radius(R, belief: Belief):
    R = check_positive("R", R)
    h1 = belief.x1[1] - belief.x1[0]
    h2 = belief.x2[1] - belief.x2[0]
    if R < math.hypot(h1, h2):
        warnings.warn(f"contact radius {R:g} is below one cell diagonal; disc masses are coarse",
                      RuntimeWarning, stacklevel=3)
    return R, h1, h2


def disc_mass(density, R, h1, h2) -> np.ndarray:
    """Mass inside the disc of radius ``R`` centred at every cell, for arrays
    ``(..., N1, N2)``, by cell-centre membership."""
    fp = disc_footprint(R, h1, h2)
    fp = fp.reshape((1,) * (density.ndim - 2) + fp.shape)
    return ndimage.correlate(density, fp.astype(float), mode="constant", cval=0.0) * (h1 * h2)


def _mask_for(belief: Belief, mask):
    if mask is None:
        return np.ones(belief.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != belief.shape:
        raise ValueError(f"mask shape {mask.shape} does not match the belief grid {belief.shape}")
    return mask


def failure_field(belief: Belief, R: float, mask=None) -> np.ndarray:
    """Probability the target is farther than ``R`` from each grid point.

    Masked-out points are set to 1 and are never selected.
    """
    R, h1, h2 = _check_radius(R, belief)
    mask = _mask_for(belief, mask)
    P = 1.0 - disc_mass(belief.mixture(), R, h1, h2)
    P = np.clip(P, 0.0, 1.0)
    P[~mask] = 1.0
    return P


def select_rendezvous(field, mask=None) -> tuple:
    """Grid index ``(k, i, j)`` of the smallest unmasked value.

    Ties go to the earliest slice, then the smallest ``x1`` index, then the
    smallest ``x2`` index (C order).
    """
    field = np.asarray(field, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != field.shape:
            raise ValueError("mask and field shapes differ")
        if not mask.any():
            raise InfeasibleError("no reachable grid point to choose from")
        field = np.where(mask, field, np.inf)
    flat = int(np.argmin(field))
    return tuple(int(v) for v in np.unravel_index(flat, field.shape))


def suppression(x1, x2, y, sigma_r) -> np.ndarray:
    """``g(z, y) = 1 - exp(-|z - y|^2 / (2 sigma_r^2))`` on the grid."""
    d2 = (np.asarray(x1)[:, None] - y[0]) ** 2 + (np.asarray(x2)[None, :] - y[1]) ** 2
    return -np.expm1(-d2 / (2.0 * sigma_r * sigma_r))


def _disc_cells(belief: Belief, y, R):
    d2 = (belief.x1[:, None] - y[0]) ** 2 + (belief.x2[None, :] - y[1]) ** 2
    return d2 <= R * R * (1 + _MEMBER_TOL)


def update_on_failure(belief: Belief, index, R: float, sigma_r: float | None = None,
                      window: float | None = None) -> Belief:
    """Condition the belief on a failed attempt at grid point ``index``.

    Parameters
    ----------
    index : (k, i, j)
        Slice and cell of the attempt.
    sigma_r : float, optional
        Width of the suppression factor; defaults to ``R / 2``.
    window : float, optional
        Only reshape slices within ``window`` of the attempt time.  By
        default every slice is reshaped.
    """
    R, h1, h2 = _check_radius(R, belief)
    sigma_r = 0.5 * R if sigma_r is None else check_positive("sigma_r", sigma_r)
    k, i, j = index
    y = (belief.x1[i], belief.x2[j])
    area = belief.cell_area
    inside = _disc_cells(belief, y, R)
    caught = belief.density[:, k][:, inside].sum(axis=1) * area
    w = belief.weights * np.clip(1.0 - caught, 0.0, 1.0)
    total = w.sum()
    if not total > 0:
        raise FloatingPointError("every hypothesis is captured by this attempt; the plan is complete")
    out = belief.copy()
    out.weights = w / total

    g = suppression(belief.x1, belief.x2, y, sigma_r)
    slices = np.arange(belief.times.size)
    if window is not None:
        slices = slices[np.abs(belief.times - belief.times[k]) <= window]
    for kk in slices:
        d = out.density[:, kk] * g
        tot = d.sum(axis=(1, 2)) * area
        ok = tot > 0
        d[ok] /= tot[ok, None, None]
        d[~ok] = out.density[~ok, kk]
        out.density[:, kk] = d
    out.history.append((int(k), int(i), int(j)))
    return out


def assign_pursuers(indices, reachable_sets) -> list:
    """Station with the smallest non-negative arrival slack for each point.

    ``reachable_sets`` is a sequence of ``ReachableSet`` on the belief grid.
    """
    out = []
    for idx in indices:
        best, best_slack = None, np.inf
        for s, rs in enumerate(reachable_sets):
            if not rs.mask[idx]:
                continue
            sl = rs.slack[idx]
            if 0 <= sl < best_slack:
                best, best_slack = s, sl
        if best is None:
            raise InfeasibleError(f"grid point {idx} is not reachable from any station")
        out.append(best)
    return out


def _union(belief: Belief, reachable_sets):
    if not reachable_sets:
        return np.ones(belief.shape, dtype=bool)
    for rs in reachable_sets:
        if rs.mask.shape != belief.shape or not np.allclose(rs.times, belief.times):
            raise ValueError("reachable sets and belief must share the (time, x1, x2) grid")
    return np.logical_or.reduce([rs.mask for rs in reachable_sets])


def plan(belief: Belief, R: float, n: int, reachable_sets=(), sigma_r: float | None = None,
         window: float | None = None) -> PlanResult:
    """Select ``n`` rendezvous points greedily.

    With no reachable sets every grid point is admissible and no station is
    assigned.  If an update shows that every hypothesis is already captured
    the plan stops early (further attempts cannot lower the failure
    probability below zero).
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    reachable_sets = list(reachable_sets)
    mask = _union(belief, reachable_sets)
    result = PlanResult([], [], belief)
    for step in range(int(n)):
        P = failure_field(belief, R, mask)
        try:
            idx = select_rendezvous(P, mask)
        except InfeasibleError as exc:
            exc.partial = result
            raise
        q = float(P[idx])
        pt = RendezvousPoint(float(belief.times[idx[0]]),
                             (float(belief.x1[idx[1]]), float(belief.x2[idx[2]])),
                             float(R), idx, 1.0 - q)
        if reachable_sets:
            s = assign_pursuers([idx], reachable_sets)[0]
            rs = reachable_sets[s]
            pt.station_id = rs.station_id
            pt.heading = float(rs.contact_heading[idx])
            pt.launch_time = float(pt.t - rs.required_time[idx])
        result.points.append(pt)
        result.conditional_failures.append(q)
        try:
            belief = update_on_failure(belief, idx, R, sigma_r, window)
        except FloatingPointError:
            result.stopped_early = step < n - 1
            break
        mass = belief.density.sum(axis=(2, 3)) * belief.cell_area
        live = belief.weights > 0
        result.diagnostics.append({
            "weight_sum_error": float(abs(belief.weights.sum() - 1.0)),
            "slice_mass_error": float(np.abs(mass[live] - 1.0).max()) if live.any() else 0.0,
        })
        result.belief = belief
    return result


def write_plan(result: PlanResult, path) -> Path:
    """CSV of the ordered points with their conditional failure probabilities."""
    path = Path(path)
    lines = ["step,t,x1,x2,R,station,launch_time,heading,success_prob,conditional_failure"]

    def f(v):
        return "" if v is None else f"{v:.17g}"

    for n, (pt, q) in enumerate(zip(result.points, result.conditional_failures)):
        st = "" if pt.station_id is None else str(pt.station_id)
        lines.append(",".join([str(n), f(pt.t), f(pt.x[0]), f(pt.x[1]), f(pt.radius), st,
                               f(pt.launch_time), f(pt.heading), f(pt.success_prob), f(q)]))
    path.write_text("\n".join(lines) + "\n")
    return path
