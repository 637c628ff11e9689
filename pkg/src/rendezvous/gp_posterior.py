"""GP correction of MAP trajectories, parameter posteriors and gridded beliefs.

Each position component is an independent GP whose prior mean is the MAP
trajectory of one parameter hypothesis and whose covariance is a second
kernel ``k#``.  Conditioning on the observed positions gives a Gaussian at
every time; the hypotheses are then weighted by their marginal likelihoods
and the resulting mixture is materialised on the planner's grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from ._validation import check_states, check_times
from .kernels import KernelSpec, eval_kernel
from .map_estimator import Observations, ParamSample

__all__ = [
    "GpTrajectory",
    "gp_condition",
    "log_marginal_likelihood",
    "param_posterior",
    "marginal_param_posterior",
    "Belief",
    "build_belief",
    "cell_centres",
    "mixture_density",
    "write_density_csv",
    "write_weights",
    "read_weights",
]

N_POS = 2
LOG_FLOOR = -745.0
_VAR_TOL = 1e-10


def _specs(spec) -> list[KernelSpec]:
    if isinstance(spec, KernelSpec):
        return [spec] * N_POS
    spec = list(spec)
    if len(spec) != N_POS:
        raise ValueError("need one k# spec per position component")
    return spec


def _positions(t_y, y):
    t_y = check_times(t_y, "observation times")
    y = np.asarray(y, dtype=float)
    if y.size and y.ndim == 2 and y.shape[1] > N_POS:
        y = y[:, :N_POS]
    return t_y, check_states(y, n_rows=t_y.size, name="positions", n_cols=N_POS)


def _prior_at(prior_mean, t) -> np.ndarray:
    if t.size == 0:
        return np.zeros((0, N_POS))
    m = np.asarray(prior_mean(t), dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    return m[:, :N_POS]


def _factor(spec: KernelSpec, t_y, sigma):
    """Lower Cholesky factor of ``K#(t_y, t_y) + sigma**2 I``."""
    K = eval_kernel(spec, t_y[:, None], t_y[None, :])
    K[np.diag_indices_from(K)] += sigma * sigma
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "K# + sigma^2 I is not positive definite (repeated times with zero noise?)") from exc
    d = np.diag(L)
    if d.size and d.min() <= 1e-10 * math.sqrt(np.max(np.diag(K))):
        raise np.linalg.LinAlgError(
            "K# + sigma^2 I is numerically singular (repeated times with zero noise?)")
    return L


@dataclass(frozen=True)
class GpTrajectory:
    """Posterior of the position components given one prior mean.

    ``mean(t)`` and ``variance(t)`` return ``(n, 2)`` arrays.  The Cholesky
    factors of ``K_sigma`` are computed once at construction.
    """

    prior: object
    specs: tuple
    times_y: np.ndarray
    sigma: np.ndarray
    chol: tuple
    alpha: np.ndarray
    param: ParamSample | None = None

    def mean(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = _prior_at(self.prior, t).copy()
        if self.times_y.size:
            for i, spec in enumerate(self.specs):
                out[:, i] += eval_kernel(spec, t[:, None], self.times_y[None, :]) @ self.alpha[:, i]
        return out

    __call__ = mean

    def variance(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, N_POS))
        for i, spec in enumerate(self.specs):
            prior_var = np.full(t.size, spec.output_scale)
            if self.times_y.size:
                Ks = eval_kernel(spec, self.times_y[:, None], t[None, :])
                v = linalg.solve_triangular(self.chol[i], Ks, lower=True)
                var = prior_var - np.sum(v * v, axis=0)
            else:
                var = prior_var
            if np.any(var < -_VAR_TOL * spec.output_scale):
                raise FloatingPointError(f"posterior variance {var.min():.3g} is negative")
            out[:, i] = np.maximum(var, 0.0)
        return out

    def predict(self, t, return_std: bool = False):
        """sklearn-style prediction of positions."""
        m = self.mean(t)
        if return_std:
            return m, np.sqrt(self.variance(t))
        return m


def gp_condition(prior, t_y, y, spec, sigma, param: ParamSample | None = None) -> GpTrajectory:
    """Condition the position GP with mean ``prior`` on observed positions.

    Parameters
    ----------
    prior : callable
        Maps times ``(n,)`` to states ``(n, >=2)``; usually a ``MapTrajectory``.
    t_y, y : array_like
        Observation times and positions (extra columns are ignored).
    spec : KernelSpec or pair of KernelSpec
        The correction kernel ``k#`` per component.
    sigma : float or pair
        Observation noise standard deviation per component.
    """
    t_y, y = _positions(t_y, y)
    specs = tuple(_specs(spec))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (N_POS,)).copy()
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    chol, alpha = [], np.zeros((t_y.size, N_POS))
    if t_y.size:
        r = y - _prior_at(prior, t_y)
        for i, s in enumerate(specs):
            L = _factor(s, t_y, sigma[i])
            chol.append(L)
            alpha[:, i] = linalg.cho_solve((L, True), r[:, i])
    else:
        chol = [None] * N_POS
    return GpTrajectory(prior, specs, t_y, sigma, tuple(chol), alpha, param)


def log_marginal_likelihood(t_y, y, prior_mean, spec, sigma, per_component: bool = False):
    """Gaussian log evidence of the observed positions under ``prior_mean``.

    Uses ``log|K_sigma|`` for the determinant, the standard GPR form.
    """
    t_y, y = _positions(t_y, y)
    if t_y.size == 0:
        raise ValueError("the marginal likelihood needs at least one observation")
    specs = _specs(spec)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (N_POS,))
    r = y - _prior_at(prior_mean, t_y)
    n = t_y.size
    out = np.empty(N_POS)
    for i, s in enumerate(specs):
        L = _factor(s, t_y, sigma[i])
        v = linalg.solve_triangular(L, r[:, i], lower=True)
        out[i] = -0.5 * (v @ v) - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    return out if per_component else float(out.sum())


def param_posterior(samples, log_likelihoods) -> np.ndarray:
    """Normalised weights ``w_p`` proportional to likelihood times prior mass.

    ``samples[k].prior`` is the prior mass represented by sample ``k``
    (equal for stratified draws from the prior).
    """
    ll = np.asarray(log_likelihoods, dtype=float).ravel()
    if ll.size == 0 or ll.size != len(samples):
        raise ValueError("need one log-likelihood per parameter sample")
    lp = ll + np.array([s.log_prior for s in samples])
    if not np.any(np.isfinite(lp)) or np.any(np.isnan(lp)):
        raise FloatingPointError("every parameter sample has zero (or undefined) likelihood")
    lw = lp - logsumexp(lp)
    w = np.where(lw < LOG_FLOOR, 0.0, np.exp(lw))
    return w / w.sum()


def _axis_values(samples, axis):
    if axis in ("rho", 0):
        return np.array([s.rho for s in samples])
    if axis in ("dest", "dest_index", 1):
        return np.array([s.dest_index for s in samples])
    raise ValueError(f"unknown parameter axis {axis!r}")


def marginal_param_posterior(axis, samples, log_likelihoods, method: str = "joint"):
    """Posterior mass over the distinct values of one parameter axis.

    Parameters
    ----------
    axis : {'rho', 'dest'}
    method : {'joint', 'conditional'}
        ``'joint'`` sums the joint weights over the other axis.
        ``'conditional'`` normalises the likelihood over this axis separately
        for every value of the other axis and averages the results, which is
        the Monte Carlo estimator written directly over the prior of the
        other axis.  Both agree when the likelihood factorises.

    Returns
    -------
    values, mass : ndarray
        Sorted distinct axis values and their posterior masses (summing to 1).
    """
    vals = _axis_values(samples, axis)
    uniq, idx = np.unique(vals, return_inverse=True)
    if method == "joint":
        w = param_posterior(samples, log_likelihoods)
        return uniq, np.bincount(idx, weights=w, minlength=uniq.size)
    if method != "conditional":
        raise ValueError(f"method must be 'joint' or 'conditional', got {method!r}")
    other = _axis_values(samples, "dest" if axis in ("rho", 0) else "rho")
    ll = np.asarray(log_likelihoods, dtype=float)
    lp = ll + np.array([s.log_prior for s in samples])
    mass = np.zeros(uniq.size)
    groups = np.unique(other)
    for g in groups:
        sel = other == g
        lg = lp[sel] - logsumexp(lp[sel])
        mass += np.bincount(idx[sel], weights=np.exp(lg), minlength=uniq.size)
    mass /= groups.size
    return uniq, mass / mass.sum()


def cell_centres(lo: float, hi: float, n: int) -> np.ndarray:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)


@dataclass
class Belief:
    """Weighted mixture of per-hypothesis densities on a (time, x1, x2) grid.

    ``density[p, k]`` integrates to one under ``cell_area`` for every
    hypothesis ``p`` and slice ``k``.  ``means`` holds each hypothesis's mean
    ``(x1, x2, heading)`` per slice, used for contact-heading filters.
    """

    samples: list
    weights: np.ndarray
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    density: np.ndarray
    means: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def cell_area(self) -> float:
        return float((self.x1[1] - self.x1[0]) * (self.x2[1] - self.x2[0]))

    @property
    def shape(self):
        return self.density.shape[1:]

    def mixture(self) -> np.ndarray:
        """Weighted density ``(K, N1, N2)``."""
        return np.tensordot(self.weights, self.density, axes=1)

    def check(self, wtol=1e-9, dtol=1e-6):
        if abs(self.weights.sum() - 1.0) > wtol:
            raise AssertionError(f"weights sum to {self.weights.sum():.17g}")
        mass = self.density.sum(axis=(2, 3)) * self.cell_area
        live = self.weights > 0
        if np.any(np.abs(mass[live] - 1.0) > dtol):
            raise AssertionError(f"density slice mass off by {np.abs(mass[live] - 1).max():.3g}")

    def copy(self) -> "Belief":
        means = None if self.means is None else self.means.copy()
        return Belief(list(self.samples), self.weights.copy(), self.times.copy(), self.x1.copy(),
                      self.x2.copy(), self.density.copy(), means, list(self.history))


def _gauss_slice(x1, x2, m, sd):
    g1 = np.exp(-0.5 * ((x1 - m[0]) / sd[0]) ** 2) / (math.sqrt(2 * math.pi) * sd[0])
    g2 = np.exp(-0.5 * ((x2 - m[1]) / sd[1]) ** 2) / (math.sqrt(2 * math.pi) * sd[1])
    return np.outer(g1, g2)


def build_belief(gps, weights, times, x1, x2, min_std: float | None = None) -> Belief:
    """Evaluate each hypothesis's independent-Gaussian slice densities on the grid.

    Slices are renormalised by the cell-area quadrature so that mass falling
    outside the domain is redistributed.  Standard deviations are floored at
    ``min_std`` (default: half a cell) so sharply peaked posteriors still
    resolve on the grid.
    """
    times = check_times(times, "belief times", allow_empty=False)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(gps):
        raise ValueError("need one weight per GP hypothesis")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to one")
    if min_std is None:
        min_std = 0.5 * min(x1[1] - x1[0], x2[1] - x2[0])
    area = (x1[1] - x1[0]) * (x2[1] - x2[0])
    P, K = len(gps), times.size
    dens = np.zeros((P, K, x1.size, x2.size))
    means = np.zeros((P, K, 3))
    for p, gp in enumerate(gps):
        m = gp.mean(times)
        sd = np.maximum(np.sqrt(gp.variance(times)), min_std)
        means[p, :, :2] = m
        means[p, :, 2] = np.asarray(gp.prior(times))[:, 2] if _has_heading(gp.prior, times) else 0.0
        for k in range(K):
            sl = _gauss_slice(x1, x2, m[k], sd[k])
            tot = sl.sum() * area
            if not tot > 0:
                warnings.warn(f"hypothesis {p} has no mass on the grid at t={times[k]:.4g}; "
                              "using a uniform slice", RuntimeWarning, stacklevel=2)
                sl = np.ones_like(sl)
                tot = sl.sum() * area
            dens[p, k] = sl / tot
    samples = [gp.param for gp in gps]
    return Belief(samples, weights.copy(), times, x1, x2, dens, means)


def _has_heading(prior, times) -> bool:
    try:
        return np.asarray(prior(times[:1])).shape[-1] > 2
    except Exception:  # noqa: BLE001 - any callable prior is acceptable
        return False


def mixture_density(belief: Belief, t, x) -> float:
    """Mixture density at time ``t`` and position ``x``.

    Bilinear in space between cell centres and linear in time between slices.
    Points outside the ring of cell centres are clamped to it.
    """
    t = float(t)
    ts = belief.times
    if not ts[0] - 1e-12 <= t <= ts[-1] + 1e-12:
        raise ValueError(f"t={t} lies outside the belief's time range [{ts[0]}, {ts[-1]}]")
    mix = belief.mixture()
    if ts.size == 1:
        k0, wt = 0, 0.0
    else:
        k0 = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        wt = min(max((t - ts[k0]) / (ts[k0 + 1] - ts[k0]), 0.0), 1.0)

    def bilinear(sl):
        f1 = np.clip((x[0] - belief.x1[0]) / (belief.x1[1] - belief.x1[0]), 0, belief.x1.size - 1)
        f2 = np.clip((x[1] - belief.x2[0]) / (belief.x2[1] - belief.x2[0]), 0, belief.x2.size - 1)
        i = min(int(f1), belief.x1.size - 2)
        j = min(int(f2), belief.x2.size - 2)
        a, b = f1 - i, f2 - j
        return ((1 - a) * (1 - b) * sl[i, j] + a * (1 - b) * sl[i + 1, j]
                + (1 - a) * b * sl[i, j + 1] + a * b * sl[i + 1, j + 1])

    val = (1 - wt) * bilinear(mix[k0])
    if wt > 0:
        val += wt * bilinear(mix[k0 + 1])
    return float(val)


def write_density_csv(belief: Belief, path, slice_index: int) -> Path:
    """Rows ``x1,x2,f`` of the mixture density at one slice."""
    path = Path(path)
    sl = belief.mixture()[slice_index]
    X1, X2 = np.meshgrid(belief.x1, belief.x2, indexing="ij")
    data = np.column_stack([X1.ravel(), X2.ravel(), sl.ravel()])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header="x1,x2,f", comments="")
    return path


def write_weights(samples, weights, path) -> Path:
    """CSV table ``rho,dest_index,weight``."""
    path = Path(path)
    lines = ["rho,dest_index,weight"]
    for s, w in zip(samples, weights):
        lines.append(f"{s.rho:.17g},{s.dest_index:d},{w:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_weights(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    samples = [ParamSample(float(r), int(d)) for r, d in data[:, :2]]
    return samples, data[:, 2]


def observations_positions(obs: Observations):
    """``(times, positions)`` of an :class:`Observations` record."""
    return obs.times, obs.values[:, :N_POS]
