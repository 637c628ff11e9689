"""Optimal steering from a gridded value function and trajectory roll-outs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .solver import State, ValueFunction

__all__ = ["Trajectory", "eval_value", "optimal_heading_rate", "extract_trajectory",
           "ExtractionWarning"]

# |du/dtheta| below this fraction of the field's typical slope counts as a tie
_TIE_FRACTION = 1e-6


class ExtractionWarning(UserWarning):
    """Raised when a roll-out fails to enter the target set in its time budget."""


@dataclass
class Trajectory:
    """Sampled path; headings are kept continuous (not wrapped)."""

    times: np.ndarray
    states: np.ndarray
    reached: bool = True

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self):
        return self.times.size

    def at(self, t):
        """Linear interpolation in time; held constant outside the span."""
        t = np.asarray(t, dtype=float)
        cols = [np.interp(t, self.times, self.states[:, c]) for c in range(3)]
        return np.stack(cols, axis=-1)

    def curvature(self) -> np.ndarray:
        """Discrete heading change per unit arc length between samples."""
        d = np.diff(self.states, axis=0)
        ds = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ds > 0, np.abs(d[:, 2]) / ds, 0.0)


def eval_value(u: ValueFunction, s: State) -> float:
    """Interpolated minimum time at ``s`` (``inf`` if unreached)."""
    return u.eval_state(s)


def _heading_rate_sign(u: ValueFunction, x1, x2, theta):
    """Vectorised ``-sgn(du/dtheta)`` with the one-cell look-ahead tie break."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    du = u.theta_derivative(x1, x2, theta)
    alpha = np.where(du > 0, -1.0, 1.0)
    tie = ~(np.abs(du) > _TIE_FRACTION * u.theta_slope_scale)
    if np.any(tie):
        alpha[tie] = _lookahead(u, x1[tie], x2[tie], theta[tie])
    return alpha


def _lookahead(u, x1, x2, theta):
    rho, v, s = u.turn_radius, u.speed, u.flow_sign
    dt = rho * u.grid.spacing[2] / v
    vals = []
    for a in (1.0, -1.0):
        th_mid = theta + 0.5 * a * v * dt / rho
        p1 = np.clip(x1 + s * v * dt * np.cos(th_mid), u.grid.lower[0], u.grid.upper[0])
        p2 = np.clip(x2 + s * v * dt * np.sin(th_mid), u.grid.lower[1], u.grid.upper[1])
        vals.append(u(p1, p2, theta + a * v * dt / rho))
    return np.where(vals[1] < vals[0], -1.0, 1.0)


def optimal_heading_rate(u: ValueFunction, s: State) -> int:
    """Bang-bang heading-rate sign ``alpha = -sgn(du/dtheta)``.

    The returned sign applies along the direction in which ``u`` decreases:
    forward time for a backward (time-to-go) field, reversed time for a
    forward (time-since-launch) field.  Ties are resolved by a one-cell
    look-ahead, defaulting to ``+1``.
    """
    return int(_heading_rate_sign(u, s.x1, s.x2, s.theta)[0])


def _rhs(u, z):
    a = _heading_rate_sign(u, z[0], z[1], z[2])[0]
    v, s = u.speed, u.flow_sign
    return np.array([s * v * math.cos(z[2]), s * v * math.sin(z[2]), a * v / u.turn_radius])


def extract_trajectory(u: ValueFunction, start: State, dt: float = 1e-3,
                       budget_factor: float = 1.5) -> Trajectory:
    """Integrate the closed-loop dynamics with Heun's method until the target
    set is entered.

    The integration runs in the direction of decreasing ``u``; for a forward
    (launch-station) field the returned times are elapsed reverse time.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    z = start.as_array()
    u0 = u.eval_state(start)
    if not math.isfinite(u0):
        raise ValueError("value function is not finite at the start state")
    tol = 0.5 * u.grid.spacing[2]
    if _inside(u, z, tol):
        return Trajectory(np.zeros(1), z[None, :].copy(), True)
    budget = budget_factor * u0
    times, states = [0.0], [z.copy()]
    t = 0.0
    lo, hi = u.grid.lower, u.grid.upper
    reached = False
    while t < budget:
        k1 = _rhs(u, z)
        zp = z + dt * k1
        zp[0] = min(max(zp[0], lo[0]), hi[0])
        zp[1] = min(max(zp[1], lo[1]), hi[1])
        k2 = _rhs(u, zp)
        z = z + 0.5 * dt * (k1 + k2)
        z[0] = min(max(z[0], lo[0]), hi[0])
        z[1] = min(max(z[1], lo[1]), hi[1])
        t += dt
        times.append(t)
        states.append(z.copy())
        if _inside(u, z, tol):
            reached = True
            break
    if not reached:
        warnings.warn(
            f"trajectory did not reach the target within {budget:.4g} time units "
            "(grid may be too coarse)", ExtractionWarning)
    return Trajectory(np.array(times), np.array(states), reached)


def _inside(u, z, heading_tol):
    target = u.target
    if hasattr(target, "headings"):
        return bool(target.contains(z[0], z[1], z[2], heading_tol=heading_tol))
    return bool(target.contains(z[0], z[1]))
