"""Squared-exponential kernel, its time derivatives, and Gram block assembly.

The kernel is parameterised as ``k(t, t') = s * exp(-(t - t')**2 / (4 l**2))``,
i.e. the lengthscale enters with a factor 4 rather than the more common 2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "KernelSpec",
    "GramBlocks",
    "eval_kernel",
    "eval_kernel_derivs",
    "build_gram",
    "DEFAULT_NUGGET",
]

DEFAULT_NUGGET = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel description.

    Parameters
    ----------
    lengthscale : float
        Time scale ``l`` (> 0).
    output_scale : float
        Variance ``s = k(t, t)`` (> 0).
    form : str
        Only ``"squared_exponential"`` is implemented.
    """

    lengthscale: float
    output_scale: float = 1.0
    form: str = "squared_exponential"

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be > 0, got {self.lengthscale}")
        if not self.output_scale > 0:
            raise ValueError(f"output_scale must be > 0, got {self.output_scale}")
        if self.form != "squared_exponential":
            raise ValueError(f"unsupported kernel form {self.form!r}")

    @property
    def _c(self) -> float:
        return 1.0 / (4.0 * self.lengthscale**2)

    @property
    def deriv_variance(self) -> float:
        """``(d_t d_t' k)(0, 0) = s / (2 l**2)``."""
        return self.output_scale / (2.0 * self.lengthscale**2)


def eval_kernel(spec: KernelSpec, t, t_prime):
    """Evaluate ``k(t, t')``; broadcasts over array arguments."""
    r = np.subtract(t, t_prime, dtype=float)
    return spec.output_scale * np.exp(-spec._c * r * r)


def eval_kernel_derivs(spec: KernelSpec, t, t_prime):
    """Return ``(d_t k, d_t' k, d_t d_t' k)`` evaluated at ``(t, t')``."""
    r = np.subtract(t, t_prime, dtype=float)
    c = spec._c
    k = spec.output_scale * np.exp(-c * r * r)
    dk_dt = -2.0 * c * r * k
    d2k = k * (2.0 * c - 4.0 * c * c * r * r)
    return dk_dt, -dk_dt, d2k


@dataclass
class GramBlocks:
    """Gram matrix over function values at ``t = [t_y; t_phi]`` and
    derivative values at ``t_phi``, plus the diagonal nugget perturbation."""

    theta: np.ndarray
    nugget_diag: np.ndarray
    times_y: np.ndarray
    times_phi: np.ndarray
    spec: KernelSpec
    nugget: float
    _chol: tuple | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([self.times_y, self.times_phi])

    @property
    def n_values(self) -> int:
        return self.times_y.size + self.times_phi.size

    @property
    def matrix(self) -> np.ndarray:
        """``Theta + D``."""
        return self.theta + np.diag(self.nugget_diag)

    def cholesky(self):
        """Lower Cholesky factor of ``Theta + D`` (cached).

        Raises
        ------
        numpy.linalg.LinAlgError
            If the perturbed Gram matrix is not numerically positive definite.
        """
        if self._chol is None:
            self._chol = linalg.cho_factor(self.matrix, lower=True, check_finite=False)
        return self._chol

    def solve(self, w: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.cholesky(), w, check_finite=False)

    def whiten(self, w: np.ndarray) -> np.ndarray:
        """``L^{-1} w`` so that ``|L^{-1} w|^2 = w^T (Theta + D)^{-1} w``."""
        L = self.cholesky()[0]
        return linalg.solve_triangular(L, w, lower=True, check_finite=False)

    def feature_rows(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Rows mapping coefficients to ``z(t)`` and ``dz/dt(t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        nodes = self.times
        val = eval_kernel(self.spec, t[:, None], nodes[None, :])
        d_t, _, _ = eval_kernel_derivs(self.spec, t[:, None], nodes[None, :])
        _, d_tp, d2 = eval_kernel_derivs(self.spec, t[:, None], self.times_phi[None, :])
        return np.hstack([val, d_tp]), np.hstack([d_t, d2])


def build_gram(t_y, t_phi, spec: KernelSpec, nugget: float = DEFAULT_NUGGET,
               require_phi: bool = False) -> GramBlocks:
    """Assemble the value/derivative Gram matrix for one state component.

    Row/column ordering is ``[values at t_y, values at t_phi, derivatives at
    t_phi]``.  The nugget adds ``nugget`` to the value block and
    ``nugget * k(0,0) / (d_t d_t' k)(0,0)`` to the derivative block.
    """
    if nugget < 0:
        raise ValueError(f"nugget must be >= 0, got {nugget}")
    t_y = np.atleast_1d(np.asarray(t_y, dtype=float)).ravel()
    t_phi = np.atleast_1d(np.asarray(t_phi, dtype=float)).ravel()
    if require_phi and t_phi.size == 0:
        raise ValueError("ODE constraints requested but no collocation times given")
    if not (np.all(np.isfinite(t_y)) and np.all(np.isfinite(t_phi))):
        raise ValueError("node times must be finite")

    t = np.concatenate([t_y, t_phi])
    n_t, n_phi = t.size, t_phi.size
    kvv = eval_kernel(spec, t[:, None], t[None, :])
    _, kvd, _ = eval_kernel_derivs(spec, t[:, None], t_phi[None, :])
    _, _, kdd = eval_kernel_derivs(spec, t_phi[:, None], t_phi[None, :])

    theta = np.empty((n_t + n_phi, n_t + n_phi))
    theta[:n_t, :n_t] = 0.5 * (kvv + kvv.T)
    theta[:n_t, n_t:] = kvd
    theta[n_t:, :n_t] = kvd.T
    theta[n_t:, n_t:] = 0.5 * (kdd + kdd.T)

    deriv_scale = spec.output_scale / spec.deriv_variance
    diag = np.concatenate([np.full(n_t, nugget), np.full(n_phi, nugget * deriv_scale)])
    return GramBlocks(theta, diag, t_y, t_phi, spec, float(nugget))
