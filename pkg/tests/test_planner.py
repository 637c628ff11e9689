import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_belief, random_belief, reach
from oracles import brute_argmin, isotropic_disc_mass
from rendezvous.errors import InfeasibleError
from rendezvous.planner import (assign_pursuers, disc_footprint, failure_field, plan,
                                select_rendezvous, suppression, update_on_failure, write_plan)


def test_footprint_is_symmetric_disc():
    fp = disc_footprint(0.03, 0.01, 0.01)
    assert fp.shape == (7, 7)
    assert fp.sum() == 29
    assert np.array_equal(fp, fp.T) and np.array_equal(fp, fp[::-1])


def test_full_capture_when_disc_covers_domain():
    b = make_belief([(0.3, 0.6), (0.7, 0.2)], [0.05, 0.08], [0.3, 0.7], n=21)
    P = failure_field(b, 1.5)
    assert np.allclose(P, 0.0, atol=1e-12)


def test_isotropic_gaussian_disc_mass():
    sd, R = 0.1, 0.05
    b = make_belief([(0.5, 0.5)], [sd], [1.0])
    P = failure_field(b, R)
    # cell-centre membership quantises the disc area by about one percent
    assert P[0, 50, 50] == pytest.approx(1 - isotropic_disc_mass(R, sd), rel=2e-2)


def test_degenerate_mixture_equals_single():
    one = make_belief([(0.3, 0.6)], [0.05], [1.0], n=41)
    two = make_belief([(0.3, 0.6), (0.7, 0.2)], [0.05, 0.08], [1.0, 0.0], n=41)
    assert np.allclose(failure_field(one, 0.1), failure_field(two, 0.1), rtol=0, atol=1e-12)


def test_masked_points_carry_sentinel():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41)
    mask = np.zeros(b.shape, dtype=bool)
    mask[3, 10:20, 10:20] = True
    P = failure_field(b, 0.1, mask)
    assert np.all(P[~mask] == 1.0)


def test_small_radius_warns():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41)
    with pytest.warns(RuntimeWarning):
        failure_field(b, 0.01)


def test_grid_mismatch_rejected():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41)
    with pytest.raises(ValueError):
        failure_field(b, 0.1, np.ones((2, 2, 2), dtype=bool))


def test_select_single_low_cell():
    f = np.full((4, 5, 6), 0.7)
    f[2, 3, 1] = 0.2
    assert select_rendezvous(f) == (2, 3, 1)


def test_select_ties_earliest_then_lexicographic():
    assert select_rendezvous(np.full((3, 4, 4), 0.5)) == (0, 0, 0)
    f = np.full((3, 4, 4), 0.5)
    f[1, 2, 3] = f[1, 3, 0] = f[2, 0, 0] = 0.1
    assert select_rendezvous(f) == (1, 2, 3)


def test_select_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = rng.random((10, 20, 20))
        mask = rng.random(f.shape) < 0.3
        assert select_rendezvous(f) == brute_argmin(f)
        assert select_rendezvous(f, mask) == brute_argmin(f, mask)


def test_select_fully_masked_is_infeasible():
    with pytest.raises(InfeasibleError):
        select_rendezvous(np.zeros((2, 3, 3)), np.zeros((2, 3, 3), dtype=bool))


def test_suppression_limits():
    x = np.linspace(0, 1, 11)
    g = suppression(x, x, (x[4], x[6]), 0.02)
    assert g[4, 6] == 0.0
    assert g[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert np.all((g >= 0) & (g <= 1))


def test_certain_capture_removes_hypothesis():
    b = make_belief([(0.2, 0.2), (0.8, 0.8)], [0.004, 0.05], [0.5, 0.5])
    k, i, j = 0, int(np.argmin(abs(b.x1 - 0.2))), int(np.argmin(abs(b.x2 - 0.2)))
    out = update_on_failure(b, (k, i, j), 0.05)
    assert out.weights[0] <= 1e-9
    assert out.weights[1] == pytest.approx(1.0, abs=1e-9)
    out.check()


def test_far_update_changes_nothing():
    b = make_belief([(0.15, 0.2), (0.2, 0.15)], [0.02, 0.02], [0.3, 0.7])
    idx = (2, 85, 85)
    out = update_on_failure(b, idx, 0.03)
    assert np.allclose(out.weights, b.weights, rtol=1e-9, atol=0)
    assert np.allclose(out.density, b.density, rtol=1e-9, atol=1e-12)


def test_update_preserves_invariants_and_input():
    rng = np.random.default_rng(1)
    b = random_belief(rng)
    before = b.density.copy()
    out = update_on_failure(b, (2, 20, 20), 0.08)
    out.check()
    assert np.array_equal(b.density, before)
    assert out.history == [(2, 20, 20)]


def test_update_window_limits_slices():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41, times=np.linspace(0, 1, 5))
    out = update_on_failure(b, (1, 20, 20), 0.08, window=0.3)
    assert np.array_equal(out.density[0, 3:], b.density[0, 3:])
    assert not np.allclose(out.density[0, 1], b.density[0, 1])


def test_update_on_total_capture_raises():
    b = make_belief([(0.5, 0.5)], [0.004], [1.0])
    with pytest.raises(FloatingPointError):
        update_on_failure(b, (0, 50, 50), 0.06)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_update_locality(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.1, 0.3, (2, 2))
    b = make_belief(c, [0.01, 0.01], [0.4, 0.6], n=51)
    out = update_on_failure(b, (1, 45, 45), 0.04)
    assert np.all(np.abs(out.weights - b.weights) <= 1e-6 * b.weights)


def test_single_step_plan_matches_initial_selection():
    rng = np.random.default_rng(2)
    b = random_belief(rng)
    res = plan(b, 0.08, 1)
    P = failure_field(b, 0.08)
    assert res.points[0].index == select_rendezvous(P)
    assert res.conditional_failures[0] == P[res.points[0].index]
    assert res.points[0].success_prob == pytest.approx(1 - P[res.points[0].index])


def test_second_point_targets_uncovered_hypothesis():
    b = make_belief([(0.25, 0.3), (0.75, 0.7)], [0.02, 0.02], [0.4, 0.6])
    res = plan(b, 0.04, 2)
    first, second = (p.index for p in res.points)
    # the first attempt goes to the heavier hypothesis
    assert math.hypot(res.points[0].x[0] - 0.75, res.points[0].x[1] - 0.7) < 0.02
    k, i, j = second
    inside = (b.x1[:, None] - b.x1[i]) ** 2 + (b.x2[None, :] - b.x2[j]) ** 2 <= 0.04**2
    mass = b.density[:, k][:, inside].sum(axis=1) * b.cell_area
    assert mass[0] > mass[1]


def test_plan_chain_rule_and_monotonicity():
    rng = np.random.default_rng(3)
    b = random_belief(rng, n=51, k=8, p=4)
    res = plan(b, 0.06, 5)
    assert len(res.points) == 5
    assert res.failure_probability == pytest.approx(np.prod(res.conditional_failures), rel=1e-9)
    cum = res.cumulative_failures
    assert np.all(np.diff(cum) <= 1e-15)
    assert res.failure_probability <= res.conditional_failures[0]
    for d in res.diagnostics:
        assert d["weight_sum_error"] <= 1e-9
        assert d["slice_mass_error"] <= 1e-6


def test_plan_respects_mask_and_assigns_stations():
    rng = np.random.default_rng(4)
    b = random_belief(rng)
    r0 = rng.uniform(0, 2.0, b.shape)
    r1 = rng.uniform(0, 2.0, b.shape)
    m0 = r0 <= b.times[:, None, None]
    m1 = r1 <= b.times[:, None, None]
    sets = [reach(m0, r0, b, 0), reach(m1, r1, b, 1)]
    res = plan(b, 0.08, 3, sets)
    for pt in res.points:
        assert m0[pt.index] or m1[pt.index]
        rs = sets[pt.station_id]
        assert rs.mask[pt.index] and rs.slack[pt.index] >= 0
        assert pt.launch_time == pytest.approx(pt.t - rs.required_time[pt.index])


def test_plan_with_empty_reachable_set_is_infeasible():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41)
    rs = reach(np.zeros(b.shape), np.zeros(b.shape), b)
    with pytest.raises(InfeasibleError) as err:
        plan(b, 0.1, 2, [rs])
    assert err.value.partial is not None and err.value.partial.points == []


def test_plan_stops_when_everything_is_captured():
    b = make_belief([(0.5, 0.5)], [0.004], [1.0])
    res = plan(b, 0.06, 3)
    assert len(res.points) == 1 and res.stopped_early
    assert res.failure_probability == pytest.approx(0.0, abs=1e-9)


def test_plan_rejects_bad_n():
    b = make_belief([(0.5, 0.5)], [0.05], [1.0], n=41)
    with pytest.raises(ValueError):
        plan(b, 0.1, 0)


def test_assign_single_station():
    rng = np.random.default_rng(5)
    b = random_belief(rng)
    rs = reach(np.ones(b.shape), np.zeros(b.shape), b)
    idx = [(0, 1, 2), (3, 4, 5), (5, 40, 0)]
    assert assign_pursuers(idx, [rs]) == [0, 0, 0]


def test_assign_prefers_smaller_slack():
    rng = np.random.default_rng(6)
    b = random_belief(rng)
    t = b.times[:, None, None]
    near = reach(np.ones(b.shape), np.broadcast_to(t - 0.05, b.shape), b, 0)
    far = reach(np.ones(b.shape), np.broadcast_to(t - 0.3, b.shape), b, 1)
    assert assign_pursuers([(3, 5, 5)], [far, near]) == [1]


def test_assign_matches_brute_force():
    rng = np.random.default_rng(7)
    b = random_belief(rng)
    sets = []
    for s in range(3):
        req = rng.uniform(0, 1.2, b.shape)
        mask = req <= b.times[:, None, None]
        sets.append(reach(mask, req, b, s))
    union = np.logical_or.reduce([r.mask for r in sets])
    idx = [tuple(v) for v in np.argwhere(union)[:200]]
    got = assign_pursuers(idx, sets)
    for g, i in zip(got, idx):
        slacks = [r.slack[i] if r.mask[i] else np.inf for r in sets]
        assert g == int(np.argmin(slacks))
    with pytest.raises(InfeasibleError):
        bad = tuple(np.argwhere(~union)[0])
        assign_pursuers([bad], sets)


def test_write_plan(tmp_path):
    rng = np.random.default_rng(8)
    b = random_belief(rng)
    res = plan(b, 0.08, 2)
    lines = write_plan(res, tmp_path / "plan.csv").read_text().splitlines()
    assert lines[0].startswith("step,t,x1,x2,R,station")
    assert len(lines) == 3
    assert float(lines[1].split(",")[-1]) == res.conditional_failures[0]
