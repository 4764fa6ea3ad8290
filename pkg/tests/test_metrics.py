import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simcovert.channel import ChannelSet, PhaseState, sim_response
from simcovert.metrics import (check_feasibility, dep_floor, kl_divergence, kl_from_gains,
                               link_gains, nu, sinr, sinr_from_gains, sum_rate)

from .conftest import cn


def toy_channels(rng, K=2, U=1, N=3):
    return ChannelSet(cn(rng, K, N), cn(rng, U, N), np.ones(K), np.ones(U))


def test_zero_beamformer_gives_zero_sinr(rng):
    ch = toy_channels(rng)
    assert sinr(ch, cn(rng, 3, 2), np.zeros((2, 2)), 1.0, 0) == 0.0


def test_single_user_sinr_is_snr(rng):
    ch = toy_channels(rng, K=1)
    G, V = cn(rng, 3, 2), cn(rng, 2, 1)
    assert sinr(ch, G, V, 0.5, 0) == pytest.approx(abs(ch.h_users[0].conj() @ G @ V[:, 0]) ** 2 / 0.5)


def test_scaling_moves_sinr_towards_interference_limit(rng):
    ch = toy_channels(rng, K=3)
    G, V = cn(rng, 3, 3), cn(rng, 3, 3)
    A, _ = link_gains(ch, G, V)
    P = np.abs(A) ** 2
    limit = P[0, 0] / (P[0].sum() - P[0, 0])
    before, after = sinr(ch, G, V, 1.0, 0), sinr(ch, G, 3 * V, 1.0, 0)
    assert min(before, limit) < after < max(before, limit)


def test_sum_rate_examples():
    assert sum_rate([0, 0]) == 0
    assert sum_rate([1, 1, 3]) == pytest.approx(4.0)
    assert sum_rate([3, 1, 1]) == sum_rate([1, 3, 1])


def test_kl_examples(rng):
    ch = toy_channels(rng)
    G = cn(rng, 3, 2)
    assert kl_divergence(ch, G, np.zeros((2, 2)), 1.0, 10, 0) == 0.0
    assert 10 * nu(1.0) == pytest.approx(10 * (1 - math.log(2)))
    assert 10 * nu(1.0) == pytest.approx(3.0685, abs=1e-4)
    V = cn(rng, 2, 2)
    assert kl_divergence(ch, G, V, 1.0, 20, 0) == pytest.approx(2 * kl_divergence(ch, G, V, 1.0, 10, 0))
    with pytest.raises(ValueError):
        kl_divergence(ch, G, V, 0.0, 10, 0)


def test_dep_floor_examples():
    assert dep_floor(0.0) == 1.0
    assert dep_floor(2 * 0.1**2) == pytest.approx(0.9)
    assert dep_floor(8.0) == 0.0
    with pytest.raises(ValueError):
        dep_floor(-1.0)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 50), b=st.floats(0, 50))
def test_dep_floor_monotone(a, b):
    lo, hi = sorted((a, b))
    assert dep_floor(hi) <= dep_floor(lo)


@settings(max_examples=200, deadline=None)
@given(x=st.just(0.0) | st.floats(1e-100, 1e6))
def test_nu_nonnegative(x):
    assert nu(x) >= 0
    assert (nu(x) == 0) == (x == 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), angle=st.floats(-10, 10))
def test_sinr_invariant_to_stream_phase(seed, angle):
    rng = np.random.default_rng(seed)
    ch = toy_channels(rng, K=2)
    G, V = cn(rng, 3, 2), cn(rng, 2, 2)
    W = V.copy()
    W[:, 1] *= np.exp(1j * angle)
    for k in range(2):
        assert sinr(ch, G, W, 1.0, k) == pytest.approx(sinr(ch, G, V, 1.0, k), rel=1e-9)


def test_feasibility_of_zero_beamformer(desk_scenario):
    sc = desk_scenario
    ps = PhaseState.zeros(sc.stack.num_layers, sc.stack.num_atoms)
    rep = check_feasibility(np.zeros((4, 2)), ps, sc.stack, sc.channels, sc.cfg)
    assert rep.covert_ok and rep.power_ok and not rep.qos_ok and not rep.feasible
    assert rep.worst_violation == pytest.approx(sc.cfg.min_rate_bpshz)


def test_power_boundary_slack(desk_scenario, rng):
    sc = desk_scenario
    V = cn(rng, 4, 2)
    V *= math.sqrt(sc.cfg.p_max) / np.linalg.norm(V)
    ps = PhaseState.random(rng, 3, 15)
    rep = check_feasibility(V, ps, sc.stack, sc.channels, sc.cfg)
    assert abs(rep.power_slack) <= 1e-9


def test_covertness_trips_at_predicted_scale(desk_scenario, rng):
    sc = desk_scenario
    cfg = sc.cfg
    ps = PhaseState.random(rng, 3, 15)
    G = sim_response(sc.stack, ps)
    V = cn(rng, 4, 2)
    _, B = link_gains(sc.channels, G, V)
    x1 = float((np.abs(B) ** 2).sum()) / cfg.noise_power  # x grows as c^2
    # closed form: J nu(c^2 x1) = 2 eps^2, solved for the critical scale
    from scipy.optimize import brentq
    x_star = brentq(lambda x: cfg.observations * nu(x) - cfg.kl_budget, 1e-12, 10)
    c_star = math.sqrt(x_star / x1)
    # bisection on the flag itself
    lo, hi = 0.0, 10 * c_star
    for _ in range(100):
        mid = (lo + hi) / 2
        rep = check_feasibility(mid * V, ps, sc.stack, sc.channels, cfg, G=G)
        lo, hi = (mid, hi) if rep.kl_slack[0] >= 0 else (lo, mid)
    assert lo == pytest.approx(c_star, rel=1e-6)


def test_report_serialisation(desk_scenario, rng):
    sc = desk_scenario
    rep = check_feasibility(cn(rng, 4, 2) * 1e-3, PhaseState.zeros(3, 15), sc.stack, sc.channels, sc.cfg)
    row = rep.csv_row()
    assert set(row) == set(rep.CSV_COLUMNS)
    d = rep.to_dict()
    assert d["sum_rate"] == rep.sum_rate and d["feasible"] == rep.feasible


def test_nu_small_argument_accuracy():
    for x in (1e-9, 1e-6, 9e-4, 1.1e-3):
        exact = sum((-1) ** k * x**k / k for k in range(2, 12))
        assert nu(x) == pytest.approx(exact, rel=1e-10)


def test_kl_from_gains_matches_formula():
    B = np.array([[1 + 1j, 0.5]])
    x = (2 + 0.25) / 2.0
    assert kl_from_gains(B, 2.0, 3)[0] == pytest.approx(3 * (x - math.log1p(x)))
    assert sinr_from_gains(np.array([[2.0]]), 4.0)[0] == pytest.approx(1.0)
