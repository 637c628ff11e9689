"""Reactive comparison pipeline: constant-acceleration Kalman filter plus a
proportional-guidance pursuer that steers at the filter's position estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from ._validation import check_positive
from .hjb.control import Trajectory
from .hjb.solver import State, wrap_angle
from .map_estimator import Observations

__all__ = [
    "KfState",
    "kf_init",
    "kf_predict",
    "kf_update",
    "PursuerState",
    "pg_rate",
    "pg_step",
    "BaselineResult",
    "run_baseline",
    "write_baseline_csv",
]

_H = np.hstack([np.eye(2), np.zeros((2, 4))])


@dataclass(frozen=True)
class KfState:
    """Mean ``(x1, x2, v1, v2, a1, a2)``, covariance and time of validity."""

    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]


def kf_init(t, position, sigma, vel_var: float = 1.0, acc_var: float = 10.0) -> KfState:
    """Filter started at the first position reading with zero velocity and
    acceleration."""
    mean = np.zeros(6)
    mean[:2] = np.asarray(position, dtype=float)[:2]
    cov = np.diag([sigma**2, sigma**2, vel_var, vel_var, acc_var, acc_var]).astype(float)
    return KfState(mean, cov, float(t))


def transition(dt: float, q: float):
    """Transition matrix and white-jerk process noise, state ordered
    ``(p1, p2, v1, v2, a1, a2)``."""
    F1 = np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    Q1 = q * np.array([
        [dt**5 / 20, dt**4 / 8, dt**3 / 6],
        [dt**4 / 8, dt**3 / 3, dt**2 / 2],
        [dt**3 / 6, dt**2 / 2, dt],
    ])
    I2 = np.eye(2)
    return np.kron(F1, I2), np.kron(Q1, I2)


def kf_predict(s: KfState, dt: float, q: float = 1.0) -> KfState:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if dt == 0:
        return s
    F, Q = transition(dt, q)
    P = F @ s.cov @ F.T + Q
    return KfState(F @ s.mean, 0.5 * (P + P.T), s.t + dt)


def kf_update(s: KfState, z, sigma: float) -> KfState:
    """Position-only measurement update (Joseph form, symmetrised)."""
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not math.isfinite(sigma):
        return s
    z = np.asarray(z, dtype=float)[:2]
    P = s.cov
    S = _H @ P @ _H.T + sigma * sigma * np.eye(2)
    try:
        cf = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("innovation covariance is singular") from exc
    K = linalg.cho_solve(cf, _H @ P).T
    mean = s.mean + K @ (z - _H @ s.mean)
    A = np.eye(6) - K @ _H
    P = A @ P @ A.T + sigma * sigma * K @ K.T
    return KfState(mean, 0.5 * (P + P.T), s.t)


@dataclass(frozen=True)
class PursuerState:
    x1: float
    x2: float
    theta: float
    speed: float
    gain: float
    max_rate: float

    @classmethod
    def from_turn_radius(cls, state, speed: float, turn_radius: float):
        """Gain ``v / (pi rho)`` and heading-rate limit ``v / rho``."""
        speed = check_positive("speed", speed)
        rho = check_positive("turn_radius", turn_radius)
        s = State(*state)
        return cls(s.x1, s.x2, s.theta, speed, speed / (math.pi * rho), speed / rho)

    @property
    def state(self) -> State:
        return State(self.x1, self.x2, self.theta)


def pg_rate(x1, x2, theta, gain, max_rate, target) -> float:
    """Saturated heading rate toward ``target``."""
    d1 = target[0] - x1
    d2 = target[1] - x2
    c, s = math.cos(theta), math.sin(theta)
    rate = gain * math.atan2(d2 * c - d1 * s, d1 * c + d2 * s)
    return min(max(rate, -max_rate), max_rate)


def pg_step(p: PursuerState, target, dt: float) -> PursuerState:
    """One Heun step of the guidance law with the target held fixed."""
    check_positive("dt", dt)
    v = p.speed

    def f(x1, x2, th):
        return v * math.cos(th), v * math.sin(th), pg_rate(x1, x2, th, p.gain, p.max_rate, target)

    k1 = f(p.x1, p.x2, p.theta)
    k2 = f(p.x1 + dt * k1[0], p.x2 + dt * k1[1], p.theta + dt * k1[2])
    x1 = p.x1 + 0.5 * dt * (k1[0] + k2[0])
    x2 = p.x2 + 0.5 * dt * (k1[1] + k2[1])
    th = p.theta + 0.5 * dt * (k1[2] + k2[2])
    return PursuerState(x1, x2, th, p.speed, p.gain, p.max_rate)


@dataclass
class BaselineResult:
    times: np.ndarray
    pursuer: np.ndarray
    estimate: np.ndarray
    truth: np.ndarray

    @property
    def distance(self) -> np.ndarray:
        return np.hypot(*(self.pursuer[:, :2] - self.truth).T)

    @property
    def miss_distance(self) -> float:
        return float(self.distance.min())


def run_baseline(truth: Trajectory, obs: Observations, pursuer: PursuerState, *, dt: float = 1e-3,
                 q: float = 1.0, t_start: float = 0.0, t_end: float | None = None) -> BaselineResult:
    """Closed-loop Kalman-filter/proportional-guidance rollout.

    The filter is initialised at the first observation, predicts to every
    step and absorbs each observation at its time.  Until the first
    observation the pursuer keeps its heading.  Headings in the
    observations are ignored.
    """
    check_positive("dt", dt)
    t_end = truth.times[-1] if t_end is None else float(t_end)
    n = int(math.floor((t_end - t_start) / dt + 1e-9)) + 1
    times = t_start + dt * np.arange(n)
    sig = float(obs.sigma[0])
    kf, nxt = None, 0
    pur = np.empty((n, 3))
    est = np.full((n, 2), np.nan)
    p = pursuer
    for m, t in enumerate(times):
        while nxt < len(obs) and obs.times[nxt] <= t + 1e-12:
            to, zo = obs.times[nxt], obs.values[nxt]
            if kf is None:
                kf = kf_init(to, zo, sig)
            else:
                kf = kf_update(kf_predict(kf, max(to - kf.t, 0.0), q), zo, sig)
            nxt += 1
        if kf is not None:
            kf = kf_predict(kf, max(t - kf.t, 0.0), q)
            est[m] = kf.position
        pur[m] = (p.x1, p.x2, p.theta)
        if m == n - 1:
            break
        if kf is not None:
            p = pg_step(p, kf.position, dt)
        else:
            p = PursuerState(p.x1 + dt * p.speed * math.cos(p.theta),
                             p.x2 + dt * p.speed * math.sin(p.theta), p.theta,
                             p.speed, p.gain, p.max_rate)
    pur[:, 2] = wrap_angle(pur[:, 2])
    tr = np.column_stack([np.interp(times, truth.times, truth.states[:, c]) for c in (0, 1)])
    return BaselineResult(times, pur, est, tr)


def write_baseline_csv(res: BaselineResult, path) -> Path:
    path = Path(path)
    data = np.column_stack([res.times, res.pursuer, res.estimate, res.truth, res.distance])
    np.savetxt(path, data, delimiter=",", fmt="%.17g",
               header="t,pursuer_x1,pursuer_x2,pursuer_theta,kf_x1,kf_x2,true_x1,true_x2,distance",
               comments="")
    return path
