"""Numba point interpolation and closed-loop roll-outs on a gridded value function."""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
_SNAP = 1e-9


@njit(cache=True)
def _snap(f):
    r = np.floor(f + 0.5)
    if abs(f - r) < _SNAP:
        return r
    return f


@njit(cache=True)
def interp_point(values, lo1, lo2, h1, h2, ht, x1, x2, th):
    n1, n2, nt = values.shape
    f1 = min(max((x1 - lo1) / h1, 0.0), n1 - 1.0)
    f2 = min(max((x2 - lo2) / h2, 0.0), n2 - 1.0)
    f1 = _snap(f1)
    f2 = _snap(f2)
    i0 = min(int(math.floor(f1)), n1 - 2)
    j0 = min(int(math.floor(f2)), n2 - 2)
    w1 = f1 - i0
    w2 = f2 - j0
    ft = _snap((th % TWO_PI) / ht)
    k0f = math.floor(ft)
    wt = ft - k0f
    k0 = int(k0f) % nt
    k1 = (k0 + 1) % nt
    total = 0.0
    for di in range(2):
        wi = w1 if di == 1 else 1.0 - w1
        if wi == 0.0:
            continue
        for dj in range(2):
            wj = w2 if dj == 1 else 1.0 - w2
            if wj == 0.0:
                continue
            for dk in range(2):
                wk = wt if dk == 1 else 1.0 - wt
                if wk == 0.0:
                    continue
                v = values[i0 + di, j0 + dj, k1 if dk == 1 else k0]
                if not np.isfinite(v):
                    return np.inf
                total += wi * wj * wk * v
    return total


@njit(cache=True)
def interp_many(values, lo1, lo2, h1, h2, ht, x1, x2, th):
    out = np.empty(x1.size)
    for n in range(x1.size):
        out[n] = interp_point(values, lo1, lo2, h1, h2, ht, x1[n], x2[n], th[n])
    return out


@njit(cache=True)
def theta_slope_many(values, lo1, lo2, hi1, hi2, h1, h2, ht, x1, x2, th):
    """Centred one-cell heading difference; positions clipped into the box."""
    out = np.empty(x1.size)
    for n in range(x1.size):
        a = min(max(x1[n], lo1), hi1)
        b = min(max(x2[n], lo2), hi2)
        up = interp_point(values, lo1, lo2, h1, h2, ht, a, b, th[n] + ht)
        dn = interp_point(values, lo1, lo2, h1, h2, ht, a, b, th[n] - ht)
        out[n] = (up - dn) / (2.0 * ht)
    return out


@njit(cache=True)
def _rhs(values, lo1, lo2, hi1, hi2, h1, h2, ht, v, rho, eps, z, out):
    a = min(max(z[0], lo1), hi1)
    b = min(max(z[1], lo2), hi2)
    up = interp_point(values, lo1, lo2, h1, h2, ht, a, b, z[2] + ht)
    dn = interp_point(values, lo1, lo2, h1, h2, ht, a, b, z[2] - ht)
    s = (up - dn) / (2.0 * ht)
    if not np.isfinite(s):
        s = 0.0
    out[0] = v * math.cos(z[2])
    out[1] = v * math.sin(z[2])
    out[2] = -(v / rho) * math.tanh(s / eps)


@njit(cache=True)
def rollout(values, lo1, lo2, hi1, hi2, h1, h2, ht, v, rho, eps, z0, dt, n_steps):
    """Heun integration of the smoothed closed loop; returns ``(n_steps+1, 3)``."""
    zs = np.empty((n_steps + 1, 3))
    z = z0.copy()
    zs[0] = z
    k1 = np.empty(3)
    k2 = np.empty(3)
    zp = np.empty(3)
    for n in range(n_steps):
        _rhs(values, lo1, lo2, hi1, hi2, h1, h2, ht, v, rho, eps, z, k1)
        for c in range(3):
            zp[c] = z[c] + dt * k1[c]
        _rhs(values, lo1, lo2, hi1, hi2, h1, h2, ht, v, rho, eps, zp, k2)
        for c in range(3):
            z[c] = z[c] + 0.5 * dt * (k1[c] + k2[c])
        zs[n + 1] = z
    return zs
