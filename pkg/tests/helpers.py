"""Small builders shared by the planner and harness tests."""
import numpy as np

from rendezvous.gp_posterior import build_belief, cell_centres, gp_condition
from rendezvous.hjb import ReachableSet
from rendezvous.kernels import KernelSpec
from rendezvous.map_estimator import ParamSample


def const_mean(x1, x2, theta=0.0):
    def f(t):
        t = np.atleast_1d(t)
        return np.tile([x1, x2, theta], (t.size, 1))
    return f


def static_gp(x1, x2, sd, rho=0.05, dest=0):
    """Hypothesis sitting still at ``(x1, x2)`` with isotropic spread ``sd``."""
    return gp_condition(const_mean(x1, x2), [], np.zeros((0, 2)), KernelSpec(0.1, sd**2), 0.0,
                        param=ParamSample(rho, dest))


def make_belief(centres, sds, weights, n=101, times=None):
    times = np.linspace(0.3, 1.0, 8) if times is None else times
    x = cell_centres(0.0, 1.0, n)
    gps = [static_gp(c[0], c[1], s, dest=k) for k, (c, s) in enumerate(zip(centres, sds))]
    return build_belief(gps, np.asarray(weights, dtype=float), times, x, x)


def random_belief(rng, n=41, k=6, p=3):
    centres = rng.uniform(0.2, 0.8, (p, 2))
    sds = rng.uniform(0.03, 0.1, p)
    return make_belief(centres, sds, rng.dirichlet(np.ones(p)), n=n, times=np.linspace(0, 1, k))


def reach(mask, required, belief, station_id=0, available_from=0.0):
    mask = np.asarray(mask, dtype=bool)
    return ReachableSet(mask, belief.times, belief.x1, belief.x2, np.zeros(mask.shape),
                        np.asarray(required, dtype=float), station_id, "free", available_from)
