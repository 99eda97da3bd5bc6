"""Subordinator paths, the exponential clock change, and limit functionals."""

import math

import numpy as np
import pytest

from sschain import limit_process as LP
from sschain import measures as M
from sschain.stats import empirical_moment
from sschain.streams import philox_rng

SEED = 31415
GAMMA = 0.5


@pytest.fixture(scope="module")
def barrier_triple():
    return M.levy_triple(M.barrier_measure(GAMMA))


# ---------------------------------------------------------------------------
# path sampling
# ---------------------------------------------------------------------------

def test_pure_killing_path():
    tr = M.levy_triple(M.atom(1.0, 0.0))
    kills = []
    for i in range(4000):
        p = LP.sample_subordinator(tr, horizon=50.0, seed=SEED, stream=i)
        assert p.jump_times.size == 0 and p.drift == 0.0
        assert p.xi_at(min(p.killing_time * 0.9, 50.0)) == 0.0
        kills.append(min(p.killing_time, 50.0))
    # exponential(1) clock: mean of the capped variable is 1 - e^-50 ~ 1
    assert empirical_moment(np.array(kills), 1.0).within(1.0, 4.0)


def test_pure_drift_path():
    tr = M.levy_triple(M.atom(1.0, 1.0))
    p = LP.sample_subordinator(tr, horizon=10.0, seed=SEED)
    t = np.linspace(0.0, 10.0, 7)
    assert np.allclose(p.xi_at(t), t)
    assert p.killing_time == math.inf


def test_compound_poisson_moments():
    rho, y0, T = 1.0, math.log(2.0), 2.0
    tr = M.LevyTriple(0.0, 0.0, M.levy_atom(rho, y0))
    counts, ends = [], []
    for i in range(4000):
        p = LP.sample_subordinator(tr, horizon=T, seed=SEED, stream=i)
        counts.append(len(p.jump_times))
        ends.append(p.xi_at(T))
        assert np.all(p.jump_sizes == y0)
    assert empirical_moment(np.array(counts, float), 1.0).within(rho * T, 4.0)
    assert empirical_moment(np.array(ends), 1.0).within(rho * y0 * T, 4.0)


def test_path_determinism(barrier_triple):
    p1 = LP.sample_subordinator(barrier_triple, 2.0, seed=9, stream=5)
    p2 = LP.sample_subordinator(barrier_triple, 2.0, seed=9, stream=5)
    assert np.array_equal(p1.jump_times, p2.jump_times)
    assert np.array_equal(p1.jump_sizes, p2.jump_sizes)


def test_cutoff_certificate(barrier_triple):
    levy = barrier_triple.levy
    for horizon in (1.0, 8.0):
        eps = LP.default_cutoff(levy, horizon)
        assert levy.variance_below(eps) <= LP.SMALL_JUMP_VARIANCE_BUDGET / horizon
        p = LP.sample_subordinator(barrier_triple, horizon, seed=1)
        assert p.neglected_variance <= LP.SMALL_JUMP_VARIANCE_BUDGET / horizon
        # compensation keeps the mean exact: drift equals the cut-jump mean
        assert p.drift == pytest.approx(levy.mean_below(p.eps_cut), rel=1e-12)


def test_spline_inverse_matches_exact_inverse():
    levy = M.barrier_levy_measure(GAMMA)
    eps = 1e-3
    plain = M.LevyMeasure(density=levy.density, small_order=levy.small_order,
                          tail=levy._tail)  # closed tail, no exact inverse
    sampler = LP._JumpSampler(plain, eps)
    u = np.linspace(1e-6, 1 - 1e-6, 200)
    got = sampler.sample(u.copy())
    expect = levy.tail_inverse(u * levy.tail(eps))
    assert np.allclose(got, expect, rtol=1e-7)


# ---------------------------------------------------------------------------
# the clock change
# ---------------------------------------------------------------------------

def test_lamperti_pure_killing():
    tr = M.levy_triple(M.atom(1.0, 0.0))
    p = LP.sample_subordinator(tr, horizon=100.0, seed=SEED, stream=3)
    ls = LP.lamperti(p, GAMMA)
    e = p.killing_time
    assert ls.killed and ls.I == pytest.approx(e, rel=1e-14)
    assert ls.sigma == ls.I
    assert ls.Y(0.3 * e) == 1.0
    assert ls.Y(e * 1.0001) == 0.0


def test_lamperti_deterministic_drift_closed_form():
    # unit drift with gamma = 1: the changed-clock path is the tent 1 - t
    tr = M.levy_triple(M.atom(1.0, 1.0))
    p = LP.sample_subordinator(tr, horizon=80.0, seed=SEED)
    ls = LP.lamperti(p, 1.0)
    assert ls.I == pytest.approx(1.0, rel=1e-12)
    for t in (0.0, 0.25, 0.77, 0.999):
        assert ls.Y(t) == pytest.approx(1.0 - t, rel=1e-9)
    assert ls.Z(2.5) == pytest.approx(math.exp(-2.5), rel=1e-12)


def test_sigma_equals_I_pathwise():
    tr = M.LevyTriple(0.7, 0.2, M.levy_atom(0.5, 0.9))
    for i in range(20):
        p = LP.sample_subordinator(tr, horizon=300.0, seed=SEED, stream=i)
        ls = LP.lamperti(p, 0.7)
        assert ls.killed
        assert abs(ls.sigma - ls.I) <= 1e-12


def test_lamperti_markov_restart_consistency(barrier_triple):
    # pathwise self-similarity: after Y-time t0 the path restarts as a
    # rescaled fresh copy driven by the shifted increments
    p = LP.sample_subordinator(barrier_triple, 6.0, seed=SEED, stream=2)
    ls = LP.lamperti(p, GAMMA)
    t0 = 0.3 * ls.I
    s0 = float(ls.xi_of_own_time(_invert_clock(ls, t0)))
    y0 = math.exp(-s0)
    # shifted path: same jumps after the split time, values offset by s0
    split = _invert_clock(ls, t0)
    keep = p.jump_times > split
    shifted = LP.SubordinatorPath(
        p.triple, p.jump_times[keep] - split, p.jump_sizes[keep], p.drift,
        math.inf, p.horizon - split, p.eps_cut, p.neglected_variance)
    ls2 = LP.lamperti(shifted, GAMMA)
    for u in (0.05, 0.2, 0.4):
        t = t0 + u * (ls.I - t0)
        rel = (t - t0) * y0 ** -GAMMA
        if rel < ls2.I:
            assert ls.Y(t) == pytest.approx(y0 * ls2.Y(rel), rel=1e-9)


def _invert_clock(ls, t):
    # first xi-clock time whose accumulated Y-length reaches t
    j = int(np.searchsorted(ls.y_bounds, t, side="right") - 1)
    a, b, g = ls.seg_xi0[j], ls.drift, ls.gamma
    rel = t - ls.y_bounds[j]
    if b == 0.0:
        return ls.t_bounds[j] + rel * math.exp(g * a)
    return ls.t_bounds[j] - math.log1p(-rel * g * b * math.exp(g * a)) / (g * b)


def test_analytic_moments():
    assert LP.analytic_moments(lambda lam: 1.0, 1.0, 3) == [1.0, 1.0, 2.0, 6.0]
    mu = M.barrier_measure(GAMMA)
    mom = LP.analytic_moments(mu, GAMMA, 2)
    assert mom[1] == pytest.approx(1.0 / (math.pi / 2 - 1), rel=1e-12)
    assert mom[2] == pytest.approx(2.0 / (math.pi / 2 - 1), rel=1e-12)
    # cross-oracle: quadrature route through the triple representation
    tr = M.levy_triple(mu)
    mom2 = LP.analytic_moments(tr, GAMMA, 2)
    assert mom2[1] == pytest.approx(mom[1], rel=1e-8)
    with pytest.raises(ValueError):
        LP.analytic_moments(lambda lam: 0.0, 1.0, 1)  # degenerate exponent


def test_exponential_functional_moments(barrier_triple):
    samples = LP.sample_exponential_functional(barrier_triple, GAMMA, 6000, SEED)
    mom = LP.analytic_moments(M.barrier_measure(GAMMA), GAMMA, 2)
    assert empirical_moment(samples, 1.0).within(mom[1], 4.0)
    assert empirical_moment(samples, 2.0).within(mom[2], 4.0)


def test_z_marginals_match_exponent(barrier_triple):
    z = LP.sample_z_marginals(barrier_triple, [0.5, 1.0], 20_000, SEED)
    for j, t in enumerate((0.5, 1.0)):
        for lam in (0.5, 1.0, 2.0):
            m = empirical_moment(z[:, j], lam)
            target = math.exp(-barrier_triple.laplace_exponent(lam) * t)
            assert m.within(target, 4.0), (t, lam)


# ---------------------------------------------------------------------------
# balls in gaps
# ---------------------------------------------------------------------------

def test_balls_in_gaps_single_ball():
    tr = M.LevyTriple(0.0, 0.0, M.levy_atom(1.0, math.log(2.0)))
    comps = LP.sample_gap_compositions(tr, 1, 500, SEED)
    assert all(c.length == 1 and c.total == 1 for c in comps)


def test_balls_in_gaps_share_probability_geometric_oracle():
    # geometric-series oracle: sum over gaps of (2^-j)^2 = 1/3
    tr = M.LevyTriple(0.0, 0.0, M.levy_atom(1.0, math.log(2.0)))
    comps = LP.sample_gap_compositions(tr, 2, 20_000, SEED)
    share = np.array([1.0 if c.length == 1 else 0.0 for c in comps])
    assert empirical_moment(share, 1.0).within(1.0 / 3.0, 4.0)
    assert all(c.total == 2 for c in comps)


def test_balls_in_gaps_requires_unkilled_path():
    tr = M.LevyTriple(5.0, 0.0, M.levy_atom(1.0, 1.0))
    rng = philox_rng(SEED, 0)
    while True:
        p = LP.sample_subordinator(tr, horizon=10.0, rng=rng)
        if p.killing_time <= 10.0:
            break
    with pytest.raises(ValueError):
        LP.balls_in_gaps(p, 2, rng=rng)


def test_balls_in_gaps_insufficient_horizon_flag():
    tr = M.LevyTriple(0.0, 0.0, M.levy_atom(1.0, math.log(2.0)))
    # a near-1 ball must eventually fall beyond a tiny path's resolution
    with pytest.raises(LP.InsufficientHorizonError):
        for i in range(2000):
            p = LP.sample_subordinator(tr, horizon=0.5, seed=SEED, stream=i)
            LP.balls_in_gaps(p, 4, seed=SEED, stream=10_000 + i)


def test_balls_in_gaps_drift_singletons():
    # pure drift covers the whole range: every ball is its own block
    tr = M.levy_triple(M.atom(1.0, 1.0))
    p = LP.sample_subordinator(tr, horizon=60.0, seed=SEED)
    c = LP.balls_in_gaps(p, 6, seed=SEED, stream=1)
    assert c.parts == (1,) * 6


# ---------------------------------------------------------------------------
# step-function clock change
# ---------------------------------------------------------------------------

def test_time_change_identity_segment():
    f = LP.StepFunction((1.0, 0.0), (0.0, 1.0))
    tc = LP.time_change(f, 2.3)
    assert tc.tau(0.5) == 0.5
    assert tc.sigma_f == 1.0
    assert tc.g.values == f.values and tc.g.knots == f.knots


def test_time_change_round_trip_and_inverse_region():
    f = LP.StepFunction((1.0, 0.5, 0.25, 0.0), (0.0, 0.7, 1.9, 2.4))
    tc = LP.time_change(f, 1.3)
    for t in (0.1, 0.69, 1.0, 2.39):
        assert tc.tau_inv(tc.tau(t)) == pytest.approx(t, abs=1e-12)
    assert tc.tau(2.4) == math.inf
    assert tc.tau_inv(1e9) == pytest.approx(tc.sigma_f)


def test_time_change_brute_force_oracle():
    f = LP.StepFunction((1.0, 0.5), (0.0, 1.0))
    tc = LP.time_change(f, 1.0)
    delta = 1e-4
    grid = np.arange(0.0, 3.0, delta)
    riemann = np.cumsum(np.asarray(tc.g(grid)) ** 1.0) * delta
    for t in (0.3, 0.9, 1.5, 2.5):
        idx = min(int(t / delta), riemann.size - 1)
        assert abs(tc.tau_inv(t) - riemann[idx]) <= 2 * delta


def test_step_function_validation():
    with pytest.raises(ValueError):
        LP.StepFunction((0.5, 0.7), (0.0, 1.0))       # increasing
    with pytest.raises(ValueError):
        LP.StepFunction((1.0, 0.5), (0.5, 1.0))       # knots not from 0
    with pytest.raises(ValueError):
        LP.StepFunction((1.5, 0.5), (0.0, 1.0))       # above 1
