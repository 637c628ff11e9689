"""ODE-constrained MAP trajectory recovery with kernel collocation.

Each state component ``z_i`` is represented by its values at the observation
times, its values at the collocation times and its time derivatives at the
collocation times.  The derivative values are not free: they are replaced by
the closed-loop right-hand side evaluated at the current state iterate, so the
ODE holds at every collocation node by construction.  What remains is a
nonlinear least-squares problem in the value unknowns, solved by a damped
Gauss-Newton (Levenberg-Marquardt) iteration with backtracking.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_states, check_times, per_channel
from .hjb import _interp
from .hjb.solver import TWO_PI, State, ValueFunction
from .kernels import DEFAULT_NUGGET, GramBlocks, KernelSpec, build_gram

__all__ = [
    "Observations",
    "ParamSample",
    "DubinsDynamics",
    "ZeroDynamics",
    "MapTrajectory",
    "fit_map",
    "eval_map",
    "MapTrajectoryEstimator",
]

N_STATE = 3
HEADING = 2


@dataclass(frozen=True)
class Observations:
    """Noisy full-state readings ``(x1, x2, theta)`` at sorted times."""

    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        t = check_times(self.times)
        y = check_states(self.values, n_rows=t.size)
        s = per_channel(self.sigma, N_STATE, "sigma")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.times.size

    def subset(self, n):
        return Observations(self.times[:n], self.values[:n], self.sigma)


@dataclass(frozen=True)
class ParamSample:
    """One hypothesis ``p = (rho, destination)`` with its prior mass."""

    rho: float
    dest_index: int
    prior: float = 1.0

    def __post_init__(self):
        check_positive("rho", self.rho)
        if int(self.dest_index) != self.dest_index or self.dest_index < 0:
            raise ValueError(f"dest_index must be a non-negative integer, got {self.dest_index}")
        check_positive("prior", self.prior)

    @property
    def log_prior(self) -> float:
        return math.log(self.prior)


class ZeroDynamics:
    """``dz/dt = 0``; useful for checks and as a neutral constraint."""

    def rhs(self, Z):
        return np.zeros_like(Z)

    def jac(self, Z):
        return np.zeros(Z.shape + (N_STATE,))

    def residual(self, Z, dZ):
        return np.abs(dZ)


class DubinsDynamics:
    """Closed-loop Dubins right-hand side driven by a value function.

    The heading rate ``-(v/rho) sgn(du/dtheta)`` is replaced by
    ``-(v/rho) tanh(du/dtheta / eps)`` with ``eps = smoothing * median|du/dtheta|``.
    """

    def __init__(self, vf: ValueFunction, smoothing: float = 1e-2):
        if vf.direction != "backward":
            raise ValueError("target dynamics need a backward (time-to-go) value function")
        self.vf = vf
        self.speed = vf.speed
        self.rho = vf.turn_radius
        self.eps = check_positive("smoothing", smoothing) * vf.theta_slope_scale
        self._fd = np.array(vf.grid.spacing) * 1e-5
        g = vf.grid
        self._args = (np.ascontiguousarray(vf.values, dtype=float), g.lower[0], g.lower[1],
                      g.upper[0], g.upper[1]) + tuple(g.spacing)

    def slope(self, Z):
        Z = np.atleast_2d(Z)
        return _interp.theta_slope_many(*self._args, np.ascontiguousarray(Z[:, 0]),
                                        np.ascontiguousarray(Z[:, 1]), np.ascontiguousarray(Z[:, 2]))

    def _turn(self, Z):
        s = self.slope(Z)
        s = np.where(np.isfinite(s), s, 0.0)
        return -(self.speed / self.rho) * np.tanh(s / self.eps)

    def rollout(self, z0, t_end, dt):
        """Smoothed closed-loop states on ``t = 0, h, ..., t_end``."""
        n = max(1, int(math.ceil(t_end / dt)))
        h = t_end / n
        a = self._args
        zs = _interp.rollout(a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], self.speed, self.rho,
                             self.eps, np.asarray(z0, dtype=float), h, n)
        return h * np.arange(n + 1), zs

    def rhs(self, Z):
        Z = np.atleast_2d(Z)
        out = np.empty_like(Z)
        out[:, 0] = self.speed * np.cos(Z[:, 2])
        out[:, 1] = self.speed * np.sin(Z[:, 2])
        out[:, 2] = self._turn(Z)
        return out

    def jac(self, Z):
        """Node-wise ``d rhs_i / d z_j``; the heading row is a central difference."""
        Z = np.atleast_2d(Z)
        J = np.zeros(Z.shape + (N_STATE,))
        J[:, 0, 2] = -self.speed * np.sin(Z[:, 2])
        J[:, 1, 2] = self.speed * np.cos(Z[:, 2])
        for j in range(N_STATE):
            dz = np.zeros(N_STATE)
            dz[j] = self._fd[j]
            J[:, 2, j] = (self._turn(Z + dz) - self._turn(Z - dz)) / (2.0 * self._fd[j])
        return J

    def residual(self, Z, dZ):
        """Per-node ``|dz/dt - rhs|`` with the exact sign rule.

        Inside the smoothing band the switching surface is treated in the
        Filippov sense: any heading rate with magnitude at most ``v/rho`` is
        admissible there.
        """
        Z = np.atleast_2d(Z)
        res = np.empty_like(Z)
        res[:, 0] = np.abs(dZ[:, 0] - self.speed * np.cos(Z[:, 2]))
        res[:, 1] = np.abs(dZ[:, 1] - self.speed * np.sin(Z[:, 2]))
        s = self.slope(Z)
        wmax = self.speed / self.rho
        exact = np.abs(dZ[:, 2] + wmax * np.sign(s))
        band = np.abs(s) <= 3.0 * self.eps
        res[:, 2] = np.where(band, np.maximum(0.0, np.abs(dZ[:, 2]) - wmax), exact)
        return res


@dataclass
class MapTrajectory:
    """Fitted kernel coefficients; call it to evaluate the trajectory."""

    grams: list
    w: list
    alpha: np.ndarray
    param: ParamSample | None
    objective: float
    trace: list
    converged: bool
    iterations: int
    grad_norm: float
    dynamics: object = field(default=None, repr=False)

    @property
    def times_y(self):
        return self.grams[0].times_y

    @property
    def times_phi(self):
        return self.grams[0].times_phi

    @property
    def specs(self):
        return [g.spec for g in self.grams]

    def __call__(self, t) -> np.ndarray:
        """States ``(n, 3)`` at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, N_STATE))
        for i, g in enumerate(self.grams):
            val, _ = g.feature_rows(t)
            out[:, i] = val @ self.alpha[i]
        return out

    def derivative(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, N_STATE))
        for i, g in enumerate(self.grams):
            _, der = g.feature_rows(t)
            out[:, i] = der @ self.alpha[i]
        return out

    @property
    def constraint_tol(self) -> float:
        """Largest nugget-induced shift ``|D alpha|`` between the collocation
        unknowns and the kernel evaluation at the same nodes."""
        return float(max(np.max(np.abs(g.nugget_diag * a)) for g, a in zip(self.grams, self.alpha)))

    def ode_residual(self) -> float:
        """Max exact-rule ODE residual over collocation nodes."""
        if self.dynamics is None or self.times_phi.size == 0:
            return 0.0
        t = self.times_phi
        return float(np.max(self.dynamics.residual(self(t), self.derivative(t))))


class _Problem:
    """Residual vector and Jacobian of the reduced objective."""

    def __init__(self, grams, y, beta, dynamics):
        self.grams = grams
        self.y = y
        self.beta = beta
        self.dyn = dynamics
        self.ny = grams[0].times_y.size
        self.nphi = grams[0].times_phi.size
        self.free_deriv = dynamics is None
        self.nb = self.ny + self.nphi * (2 if self.free_deriv else 1)
        self.Linv = [linalg.solve_triangular(g.cholesky()[0], np.eye(g.theta.shape[0]), lower=True)
                     for g in grams]

    def split(self, x):
        return x.reshape(N_STATE, self.nb)

    def unwrap(self, x):
        """Move heading observations to the branch nearest the iterate."""
        if self.ny == 0:
            return
        wy = self.split(x)[HEADING, :self.ny]
        yh = self.y[:, HEADING]
        self.y[:, HEADING] = yh + TWO_PI * np.round((wy - yh) / TWO_PI)

    def _w(self, x):
        X = self.split(x)
        ny, nphi = self.ny, self.nphi
        Z0 = X[:, ny:ny + nphi].T
        if self.free_deriv:
            F = X[:, ny + nphi:].T
        else:
            F = self.dyn.rhs(Z0) if nphi else np.zeros((0, N_STATE))
        return X, Z0, F

    def residual(self, x):
        X, Z0, F = self._w(x)
        ny, nphi = self.ny, self.nphi
        parts = []
        for i in range(N_STATE):
            w = np.concatenate([X[i, :ny + nphi], F[:, i]])
            parts.append(self.Linv[i] @ w)
        parts.append(((X[:, :ny].T - self.y) / self.beta).T.ravel())
        return np.concatenate(parts)

    def jacobian(self, x):
        X, Z0, F = self._w(x)
        ny, nphi, nb = self.ny, self.nphi, self.nb
        nt = ny + nphi
        rows = []
        dF = None if (self.free_deriv or nphi == 0) else self.dyn.jac(Z0)
        for i in range(N_STATE):
            Li = self.Linv[i]
            block = np.zeros((Li.shape[0], N_STATE * nb))
            block[:, i * nb:i * nb + nt] = Li[:, :nt]
            if self.free_deriv:
                block[:, i * nb + nt:(i + 1) * nb] = Li[:, nt:]
            elif dF is not None:
                for j in range(N_STATE):
                    d = dF[:, i, j]
                    if np.any(d):
                        block[:, j * nb + ny:j * nb + nt] += Li[:, nt:] * d[None, :]
            rows.append(block)
        data = np.zeros((N_STATE * ny, N_STATE * nb))
        for i in range(N_STATE):
            for k in range(ny):
                data[i * ny + k, i * nb + k] = 1.0 / self.beta[i]
        rows.append(data)
        return np.vstack(rows)


def _sample(ts, zs, t):
    return np.stack([np.interp(t, ts, zs[:, c]) for c in range(N_STATE)], axis=1)


def _shooting_start(dyn, obs_t, y, sigma, t_end, dt):
    """Initial state whose closed-loop roll-out best fits the observations."""
    z0 = y[0].copy()
    if obs_t.size > 1:
        d = y[1, :2] - y[0, :2]
        if np.hypot(*d) > 0:
            z0[HEADING] = math.atan2(d[1], d[0])
    z0[HEADING] = y[0, HEADING] + math.remainder(z0[HEADING] - y[0, HEADING], TWO_PI)
    # extrapolate the first reading back to t = 0 along the guessed heading
    z0[0] -= dyn.speed * obs_t[0] * math.cos(z0[HEADING])
    z0[1] -= dyn.speed * obs_t[0] * math.sin(z0[HEADING])

    def resid(z):
        ts, zs = dyn.rollout(z, t_end, dt)
        pred = _sample(ts, zs, obs_t)
        diff = pred - y
        diff[:, HEADING] = np.remainder(diff[:, HEADING] + math.pi, TWO_PI) - math.pi
        return (diff / sigma).ravel()

    best = min((z0, y[0].copy()), key=lambda z: float(np.sum(resid(z) ** 2)))
    sol = optimize.least_squares(resid, best, method="trf", x_scale=np.array([0.01, 0.01, 0.1]),
                                 max_nfev=60)
    return sol.x


def _initial_guess(obs_t, y, sigma, t_phi, dynamics, rollout_dt):
    """Observation-branch headings and collocation values to start from.

    Under Dubins dynamics the guess is a closed-loop roll-out from a fitted
    start state, so the substituted derivatives agree with the values from
    the first iterate on; otherwise observations are linearly interpolated.
    """
    ny = obs_t.size
    if ny == 0:
        return np.zeros((0, N_STATE)), np.zeros((t_phi.size, N_STATE))
    y = y.copy()
    y[:, HEADING] = np.unwrap(y[:, HEADING])
    if isinstance(dynamics, DubinsDynamics):
        t_end = max(t_phi[-1] if t_phi.size else 0.0, obs_t[-1]) + rollout_dt
        z0 = _shooting_start(dynamics, obs_t, y, sigma, t_end, rollout_dt)
        ts, zs = dynamics.rollout(z0, t_end, rollout_dt)
        return _sample(ts, zs, obs_t), _sample(ts, zs, t_phi)
    Z0 = np.stack([np.interp(t_phi, obs_t, y[:, c]) for c in range(N_STATE)], axis=1)
    return y, Z0


def fit_map(obs: Observations, dynamics=None, *, specs=None, t_phi=None, horizon=None,
            n_collocation: int = 40, beta=None, nugget: float = DEFAULT_NUGGET,
            param: ParamSample | None = None, max_iter: int = 100, gtol: float = 1e-8,
            ftol: float = 1e-3, window: int = 5, rollout_dt: float = 2e-3,
            warn: bool = True) -> MapTrajectory:
    """Fit the ODE-constrained MAP trajectory.

    Parameters
    ----------
    obs : Observations
        Identity-sensor readings of ``(x1, x2, theta)``.
    dynamics : DubinsDynamics, ZeroDynamics or None
        Closed-loop right-hand side substituted for the derivative unknowns.
        ``None`` drops the ODE constraint and leaves derivatives free, which
        reduces the problem to ordinary kernel regression.
    specs : KernelSpec or list of three, optional
        Defaults to unit-scale squared exponentials with lengthscale 0.05.
    t_phi : array_like, optional
        Collocation times.  Defaults to ``n_collocation`` uniform points on
        ``[0, horizon)``.
    beta : float or array_like, optional
        Data weights per channel; defaults to ``obs.sigma``.
    gtol : float
        Stop when the largest cosine between the residual vector and any
        Jacobian column falls below ``gtol`` (a scale-free gradient test).
    ftol, window : float, int
        Also stop when ``window`` consecutive accepted steps together lower
        the objective by less than ``ftol * f``.  The smoothed switching term
        is very stiff, so the plain gradient of a solved problem stays large
        while the iterates have stopped moving.

    Returns
    -------
    MapTrajectory
        ``converged`` is False (and a ``ConvergenceWarning`` is emitted) when
        neither criterion was met within ``max_iter`` iterations.
    """
    if specs is None:
        specs = KernelSpec(0.05)
    if isinstance(specs, KernelSpec):
        specs = [specs] * N_STATE
    if len(specs) != N_STATE:
        raise ValueError("need one kernel spec per state component")
    if t_phi is None:
        if horizon is None:
            horizon = obs.times[-1] if len(obs) else 1.0
        check_positive("horizon", horizon)
        t_phi = np.linspace(0.0, horizon, int(n_collocation), endpoint=False)
    t_phi = check_times(t_phi, "t_phi")
    if dynamics is not None and t_phi.size == 0:
        raise ValueError("ODE constraints requested but no collocation times given")
    beta = obs.sigma if beta is None else per_channel(beta, N_STATE, "beta")
    grams = [build_gram(obs.times, t_phi, s, nugget, require_phi=dynamics is not None) for s in specs]
    try:
        for g in grams:
            g.cholesky()
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "Gram matrix is singular; use a positive nugget when node times repeat") from exc

    w_y, Z0 = _initial_guess(obs.times, obs.values, obs.sigma, t_phi, dynamics, rollout_dt)
    y0 = obs.values.copy()
    if len(obs):
        y0[:, HEADING] = np.unwrap(y0[:, HEADING])
    prob = _Problem(grams, y0, beta, dynamics)
    X = np.zeros((N_STATE, prob.nb))
    X[:, :prob.ny] = w_y.T
    X[:, prob.ny:prob.ny + prob.nphi] = Z0.T
    if prob.free_deriv and prob.nphi:
        X[:, prob.ny + prob.nphi:] = np.gradient(Z0, t_phi, axis=0).T if prob.nphi > 1 else 0.0
    x = X.ravel()

    lam = 1e-3
    trace = []
    converged = False
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        prob.unwrap(x)
        r = prob.residual(x)
        f = float(r @ r)
        if not trace or f < trace[-1]:
            trace.append(f)
        J = prob.jacobian(x)
        g = J.T @ r
        JtJ = J.T @ J
        diag = np.diag(JtJ)
        # largest cosine between the residual and a Jacobian column
        gnorm = float(np.max(np.abs(g) / (np.sqrt(diag) * math.sqrt(f) + 1e-300))) if g.size else 0.0
        if gnorm <= gtol:
            converged = True
            break
        dscale = np.maximum(diag, 1e-12 * max(1.0, float(np.max(diag))))
        accepted = False
        while lam < 1e12:
            try:
                step = linalg.cho_solve(linalg.cho_factor(JtJ + lam * np.diag(dscale)), -g)
            except linalg.LinAlgError:
                lam *= 10.0
                continue
            slope = 2.0 * float(g @ step)
            a = 1.0
            for _ in range(8):
                rn = prob.residual(x + a * step)
                fn = float(rn @ rn)
                if fn <= f + 1e-4 * a * slope and np.isfinite(fn):
                    accepted = True
                    break
                a *= 0.5
            if accepted:
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10.0
        if not accepted:
            break
        x = x + a * step
        trace.append(fn)
        if len(trace) > window and trace[-1 - window] - fn <= ftol * fn:
            converged = True
            break

    prob.unwrap(x)
    r = prob.residual(x)
    obj = float(r @ r)
    X, Z0, F = prob._w(x)
    ny, nphi = prob.ny, prob.nphi
    ws, alphas = [], []
    for i in range(N_STATE):
        w = np.concatenate([X[i, :ny + nphi], F[:, i]])
        ws.append(w)
        alphas.append(grams[i].solve(w))
    if not converged and warn:
        warnings.warn(
            f"MAP fit did not converge in {it} iterations (gradient {gnorm:.3e}); "
            f"objective trace tail {trace[-5:]}", ConvergenceWarning)
    return MapTrajectory(grams, ws, np.array(alphas), param, obj, trace, converged, it, gnorm,
                         dynamics)


def eval_map(traj: MapTrajectory, t):
    """Evaluate the MAP trajectory; a scalar time returns a :class:`State`."""
    if np.ndim(t) == 0:
        z = traj(float(t))[0]
        return State(z[0], z[1], z[2])
    return traj(t)


class MapTrajectoryEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_map`.

    ``fit(t, Y, value_function=...)`` takes observation times and an
    ``(n, 3)`` array of ``(x1, x2, theta)`` readings; ``predict(t)`` returns
    the fitted states.
    """

    def __init__(self, lengthscale=0.05, output_scale=1.0, sigma=0.03, beta=None, horizon=None,
                 n_collocation=40, nugget=DEFAULT_NUGGET, smoothing=1e-2, max_iter=100, gtol=1e-8):
        self.lengthscale = lengthscale
        self.output_scale = output_scale
        self.sigma = sigma
        self.beta = beta
        self.horizon = horizon
        self.n_collocation = n_collocation
        self.nugget = nugget
        self.smoothing = smoothing
        self.max_iter = max_iter
        self.gtol = gtol

    def fit(self, t, Y, value_function: ValueFunction | None = None, param: ParamSample | None = None):
        obs = Observations(t, Y, self.sigma)
        dyn = None if value_function is None else DubinsDynamics(value_function, self.smoothing)
        self.trajectory_ = fit_map(
            obs, dyn, specs=KernelSpec(self.lengthscale, self.output_scale), horizon=self.horizon,
            n_collocation=self.n_collocation, beta=self.beta, nugget=self.nugget, param=param,
            max_iter=self.max_iter, gtol=self.gtol)
        self.converged_ = self.trajectory_.converged
        return self

    def predict(self, t):
        check_is_fitted(self, "trajectory_")
        return self.trajectory_(check_times(t, sorted_=False, nonneg=False))

    def score(self, t, Y):
        """Negative RMS position error against reference states."""
        pred = self.predict(t)
        Y = check_states(Y, n_rows=pred.shape[0])
        return -float(np.sqrt(np.mean(np.sum((pred[:, :2] - Y[:, :2]) ** 2, axis=1))))
