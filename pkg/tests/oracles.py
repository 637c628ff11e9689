"""Independent reference computations used only by the test-suite."""
import math

import numpy as np
from scipy import optimize

from rendezvous.kernels import eval_kernel

TWO_PI = 2 * math.pi


def _mod(a):
    return np.mod(a, TWO_PI)


def dubins_word_lengths(start, goal, rho):
    """Normalised lengths (t, p, q) of the six Dubins words between two poses.

    Returns a dict word -> (t, p, q) arrays (nan where the word is infeasible).
    Lengths are in units of ``rho``.
    """
    x0, y0, th0 = (np.asarray(v, dtype=float) for v in start)
    x1, y1, th1 = (np.asarray(v, dtype=float) for v in goal)
    dx, dy = x1 - x0, y1 - y0
    d = np.hypot(dx, dy) / rho
    phi = np.arctan2(dy, dx)
    a = _mod(th0 - phi)
    b = _mod(th1 - phi)
    sa, sb, ca, cb = np.sin(a), np.sin(b), np.cos(a), np.cos(b)
    cab = np.cos(a - b)
    out = {}
    with np.errstate(invalid="ignore"):
        p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        tmp = np.arctan2(cb - ca, d + sa - sb)
        out["LSL"] = (_mod(-a + tmp), np.where(p2 >= 0, np.sqrt(np.maximum(p2, 0)), np.nan), _mod(b - tmp))

        p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        tmp = np.arctan2(ca - cb, d - sa + sb)
        out["RSR"] = (_mod(a - tmp), np.where(p2 >= 0, np.sqrt(np.maximum(p2, 0)), np.nan), _mod(-b + tmp))

        p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        p = np.where(p2 >= 0, np.sqrt(np.maximum(p2, 0)), np.nan)
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        out["LSR"] = (_mod(-a + tmp), p, _mod(-b + tmp))

        p2 = -2 + d * d + 2 * cab - 2 * d * (sa + sb)
        p = np.where(p2 >= 0, np.sqrt(np.maximum(p2, 0)), np.nan)
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        out["RSL"] = (_mod(a - tmp), p, _mod(b - tmp))

        c = (6.0 - d * d + 2 * cab + 2 * d * (sa - sb)) / 8.0
        p = np.where(np.abs(c) <= 1, _mod(TWO_PI - np.arccos(np.clip(c, -1, 1))), np.nan)
        t = _mod(a - np.arctan2(ca - cb, d - sa + sb) + p / 2.0)
        out["RLR"] = (t, p, _mod(a - b - t + p))

        c = (6.0 - d * d + 2 * cab + 2 * d * (-sa + sb)) / 8.0
        p = np.where(np.abs(c) <= 1, _mod(TWO_PI - np.arccos(np.clip(c, -1, 1))), np.nan)
        t = _mod(-a - np.arctan2(ca - cb, d + sa - sb) + p / 2.0)
        out["LRL"] = (t, p, _mod(-a + b - t + p))
    return out


def dubins_length(start, goal, rho):
    """Shortest Dubins path length between two poses (vectorised)."""
    words = dubins_word_lengths(start, goal, rho)
    total = np.stack([t + p + q for t, p, q in words.values()])
    return rho * np.nanmin(total, axis=0)


def integrate_word(start, word, segs, rho, n=2000):
    """Trace a Dubins word; returns the final pose (for oracle self-checks)."""
    x, y, th = start
    for letter, seg in zip(word, segs):
        L = seg * rho
        for _ in range(n):
            ds = L / n
            if letter == "S":
                x += ds * math.cos(th)
                y += ds * math.sin(th)
            else:
                sgn = 1.0 if letter == "L" else -1.0
                th_new = th + sgn * ds / rho
                x += sgn * rho * (math.sin(th_new) - math.sin(th))
                y += -sgn * rho * (math.cos(th_new) - math.cos(th))
                th = th_new
    return x, y, th % TWO_PI


def dubins_time_to_disk(state, center, radius, rho, speed=1.0, n_phi=240, n_psi=240):
    """Minimum time for a Dubins car to reach a disk with free arrival heading.

    Dense enumeration over boundary points and arrival headings followed by a
    local Nelder-Mead refinement of the best few candidates.
    """
    cx, cy = center
    x0, y0, th0 = state
    if math.hypot(x0 - cx, y0 - cy) <= radius:
        return 0.0
    phi = np.linspace(0, TWO_PI, n_phi, endpoint=False)
    psi = np.linspace(0, TWO_PI, n_psi, endpoint=False)
    P, S = np.meshgrid(phi, psi, indexing="ij")
    gx = cx + radius * np.cos(P)
    gy = cy + radius * np.sin(P)
    L = dubins_length((x0, y0, th0), (gx, gy, S), rho)
    order = np.argsort(L, axis=None)[:6]

    def f(z):
        return float(dubins_length((x0, y0, th0), (cx + radius * math.cos(z[0]),
                                                   cy + radius * math.sin(z[0]), z[1]), rho))

    best = float(L.flat[order[0]])
    for idx in order:
        res = optimize.minimize(f, [P.flat[idx], S.flat[idx]], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
        best = min(best, float(res.fun))
    return best / speed


def isotropic_disc_mass(R, sigma):
    """Mass of an isotropic 2-D Gaussian inside a centred disc."""
    return 1.0 - math.exp(-R * R / (2 * sigma * sigma))


def dense_gpr(prior, t_y, y, spec, sigma, t):
    """Textbook GP regression with explicit inverses."""
    K = eval_kernel(spec, t_y[:, None], t_y[None, :]) + sigma**2 * np.eye(t_y.size)
    Ks = eval_kernel(spec, t[:, None], t_y[None, :])
    Kinv = np.linalg.inv(K)
    r = y - prior(t_y)[:, :2]
    mean = prior(t)[:, :2] + Ks @ Kinv @ r
    var = spec.output_scale - np.einsum("ij,jk,ik->i", Ks, Kinv, Ks)
    return mean, var


def dense_loglik(prior, t_y, y, spec, sigma):
    K = eval_kernel(spec, t_y[:, None], t_y[None, :]) + sigma**2 * np.eye(t_y.size)
    r = y - prior(t_y)[:, :2]
    _, logdet = np.linalg.slogdet(K)
    tot = 0.0
    for i in range(2):
        tot += -0.5 * r[:, i] @ np.linalg.inv(K) @ r[:, i] - 0.5 * logdet - 0.5 * t_y.size * math.log(2 * math.pi)
    return tot


def brute_argmin(field, mask=None):
    best, arg = np.inf, None
    K, N1, N2 = field.shape
    for k in range(K):
        for i in range(N1):
            for j in range(N2):
                if mask is not None and not mask[k, i, j]:
                    continue
                if field[k, i, j] < best:
                    best, arg = field[k, i, j], (k, i, j)
    return arg
