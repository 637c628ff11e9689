"""Numba kernels for the Dubins minimum-time HJB fast-sweeping solver.

Upwind discretisation at node ``(i, j, k)`` for a control ``alpha``:

    u = (1 + a u[i+si, j, k] + b u[i, j+sj, k] + |alpha| c u[i, j, k+alpha])
        / (a + b + |alpha| c)

with ``a = v|cos|/h1``, ``b = v|sin|/h2``, ``c = v/(rho h_theta)`` and the
offsets pointing downstream along the (possibly time-reversed) flow.  The
minimum over ``alpha in {-1, 0, +1}`` is taken.  At the walls a difference
whose downstream node lies outside the box is dropped (one-sided), so no
information enters from outside.
"""
import numpy as np
from numba import njit

_EPS_DIR = 1e-12


@njit(cache=True)
def _local_update(u, i, j, k, a, si, b, sj, c):
    n1, n2, nt = u.shape
    num = 1.0
    den = 0.0
    if a > 0.0:
        ni = i + si
        if 0 <= ni < n1:
            num += a * u[ni, j, k]
            den += a
    if b > 0.0:
        nj = j + sj
        if 0 <= nj < n2:
            num += b * u[i, nj, k]
            den += b
    best = num / den if den > 0.0 else np.inf
    up = u[i, j, (k + 1) % nt]
    dn = u[i, j, (k - 1 + nt) % nt]
    nb = up if up < dn else dn
    turn = (num + c * nb) / (den + c)
    return turn if turn < best else best


@njit(cache=True)
def _coeffs(k, cos_t, sin_t, h1, h2, speed, flow_sign):
    ck = flow_sign * cos_t[k]
    sk = flow_sign * sin_t[k]
    a = speed * abs(ck) / h1 if abs(ck) > _EPS_DIR else 0.0
    b = speed * abs(sk) / h2 if abs(sk) > _EPS_DIR else 0.0
    si = 1 if ck > 0 else -1
    sj = 1 if sk > 0 else -1
    return a, si, b, sj


@njit(cache=True)
def sweep(u, frozen, cos_t, sin_t, h1, h2, hth, speed, rho, flow_sign, tol, max_rounds):
    """Gauss-Seidel sweeps in 8 orderings until the max update is below ``tol``.

    Returns ``(rounds, last_change)``; ``u`` is updated in place.
    """
    n1, n2, nt = u.shape
    c = speed / (rho * hth)
    last = np.inf
    for rnd in range(max_rounds):
        change = 0.0
        for order in range(8):
            fwd_i = (order & 1) == 0
            fwd_j = (order & 2) == 0
            fwd_k = (order & 4) == 0
            for kk in range(nt):
                k = kk if fwd_k else nt - 1 - kk
                a, si, b, sj = _coeffs(k, cos_t, sin_t, h1, h2, speed, flow_sign)
                for ii in range(n1):
                    i = ii if fwd_i else n1 - 1 - ii
                    for jj in range(n2):
                        j = jj if fwd_j else n2 - 1 - jj
                        if frozen[i, j, k]:
                            continue
                        cand = _local_update(u, i, j, k, a, si, b, sj, c)
                        old = u[i, j, k]
                        if cand < old:
                            d = old - cand
                            if d > change:
                                change = d
                            u[i, j, k] = cand
        last = change
        if change < tol:
            return rnd + 1, last
    return max_rounds, last


@njit(cache=True)
def residual(u, frozen, cos_t, sin_t, h1, h2, hth, speed, rho, flow_sign):
    """Max |u - update(u)| over reached, non-target nodes."""
    n1, n2, nt = u.shape
    c = speed / (rho * hth)
    worst = 0.0
    for k in range(nt):
        a, si, b, sj = _coeffs(k, cos_t, sin_t, h1, h2, speed, flow_sign)
        for i in range(n1):
            for j in range(n2):
                if frozen[i, j, k] or not np.isfinite(u[i, j, k]):
                    continue
                d = abs(_local_update(u, i, j, k, a, si, b, sj, c) - u[i, j, k])
                if d > worst:
                    worst = d
    return worst
