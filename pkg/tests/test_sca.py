import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from simcovert.channel import ChannelSet, PhaseState, SimStack, sim_response
from simcovert.conic import (INFEASIBLE, OPTIMAL, ConicProgram, dump_conic, solve_conic)
from simcovert.config import profile_config
from simcovert.metrics import check_feasibility, link_gains
from simcovert.sca import (SurrogateState, beamfocusing_step, beamfocusing_to_convergence,
                           lower_beamfocusing, lower_phase_layer, phase_layer_step,
                           phase_layer_to_convergence, project_unit_modulus, tau_bound,
                           taylor_coefficients, taylor_minorant)

from .conftest import cn


# conic backend ------------------------------------------------------------------
def test_conic_linear():
    x = cp.Variable()
    prog = ConicProgram(cp.Problem(cp.Maximize(x), [x <= 3]), {"x": x})
    sol = solve_conic(prog)
    assert sol.status == OPTIMAL and sol.values["x"] == pytest.approx(3)


def test_conic_second_order_cone():
    x = cp.Variable(2)
    prog = ConicProgram(cp.Problem(cp.Maximize(cp.sum(x)), [cp.norm(x) <= 1]), {"x": x})
    sol = solve_conic(prog)
    np.testing.assert_allclose(sol.values["x"], [math.sqrt(2) / 2] * 2, atol=1e-7)


def test_conic_infeasible():
    x = cp.Variable()
    prog = ConicProgram(cp.Problem(cp.Maximize(x), [x >= 1, x <= 0]), {"x": x})
    assert solve_conic(prog).status == INFEASIBLE


def test_conic_dump(tmp_path):
    x = cp.Variable(2)
    p = cp.Parameter(nonneg=True, value=2.0)
    prog = ConicProgram(cp.Problem(cp.Maximize(cp.sum(cp.log(1 + x))), [cp.norm(x) <= p]),
                        {"x": x}, {"p": p}, name="toy")
    dump_conic(prog, tmp_path / "toy.txt")
    text = (tmp_path / "toy.txt").read_text()
    assert text.startswith("# toy") and "exp=" in text and "\nA\n" in text


# scalar helpers -------------------------------------------------------------------
def test_tau_bound_examples():
    assert tau_bound(0.0, 10) == 1.0
    t = tau_bound(0.1, 10)
    assert 1.063 <= t <= 1.066
    assert t - math.log(t) - 1 == pytest.approx(0.002, abs=1e-12)
    assert tau_bound(0.1, 1) > t


@settings(max_examples=100, deadline=None)
@given(eps=st.floats(0.01, 1.0), J=st.integers(1, 100))
def test_tau_bound_matches_lambert_w(eps, J):
    # the W oracle is itself ill-conditioned near its branch point, so keep c >= 2e-6
    c = 2 * eps**2 / J
    oracle = float(np.real(-lambertw(-math.exp(-(1 + c)), -1)))
    assert tau_bound(eps, J) == pytest.approx(oracle, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(eps=st.floats(1e-4, 1.0), J=st.integers(1, 10_000))
def test_tau_bound_residual(eps, J):
    c = 2 * eps**2 / J
    t = tau_bound(eps, J)
    assert t > 1
    # small-c expansion tau - 1 ~ sqrt(2c) pins the root where the residual cancels
    assert (t - math.log(t) - 1) == pytest.approx(c, rel=1e-6, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(tau=st.floats(1.0, 2.0), eps=st.floats(0.01, 0.5), J=st.integers(1, 50))
def test_tau_box_equivalent_to_kl_constraint(tau, eps, J):
    t_max = tau_bound(eps, J)
    if abs(tau - t_max) < 1e-10:
        return
    assert (J * (tau - math.log(tau) - 1) <= 2 * eps**2) == (tau <= t_max)


def test_minorant_tangent_and_zero():
    a, d = 1.5 - 0.5j, 2.0
    assert taylor_minorant(a, d, a, d) == pytest.approx(abs(a) ** 2 / d, abs=1e-12)
    assert taylor_minorant(0.0, d, 3 + 1j, 7.0) == 0.0
    with pytest.raises(ValueError):
        taylor_coefficients(a, 0.0)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_minorant_below_quotient(seed):
    rng = np.random.default_rng(seed)
    a, num = complex(*rng.normal(size=2) * 3), complex(*rng.normal(size=2) * 3)
    d0, d = rng.uniform(0.1, 5, 2)
    assert taylor_minorant(a, d0, num, d) <= abs(num) ** 2 / d + 1e-9


def test_projection_examples():
    np.testing.assert_allclose(project_unit_modulus([0.5 * np.exp(1j * np.pi / 3)]), [np.exp(1j * np.pi / 3)])
    np.testing.assert_array_equal(project_unit_modulus([0.0]), [1.0])
    u = np.exp(1j * np.linspace(0, 6, 7))
    assert np.max(np.abs(project_unit_modulus(u) - u)) <= 1e-15


# subproblems ------------------------------------------------------------------------
@pytest.fixture(scope="module")
def single_user():
    cfg = profile_config("desk", num_users=1, num_wardens=0)
    from simcovert.ao import build_scenario

    scenario, _ = build_scenario(cfg, seed=4)
    return scenario


def test_single_user_beamfocusing_is_matched_filter(single_user):
    sc = single_user
    cfg = sc.cfg.replace(p_max_dbm=60.0)
    G = sim_response(sc.stack, PhaseState.random(np.random.default_rng(0), 3, 15))
    V0 = cn(np.random.default_rng(1), 4, 1) * 1e-3
    res = beamfocusing_step(V0, sc.channels, G, cfg)
    assert res.status == OPTIMAL
    g = sc.channels.h_users[0].conj() @ G
    achieved = abs(g @ res.value[:, 0]) ** 2
    bound = np.linalg.norm(g) ** 2 * cfg.p_max
    assert achieved == pytest.approx(bound, rel=1e-6)


def test_unreachable_qos_is_infeasible(desk_scenario, rng):
    sc = desk_scenario
    cfg = sc.cfg.replace(min_rate_bpshz=5.0)
    G = sim_response(sc.stack, PhaseState.random(rng, 3, 15))
    prog = lower_beamfocusing(cn(rng, 4, 2) * 1e-3, sc.channels, G, cfg)
    assert solve_conic(prog).status == INFEASIBLE
    res = beamfocusing_step(cn(rng, 4, 2) * 1e-3, sc.channels, G, cfg)
    assert res.softened and res.status == OPTIMAL


def test_beamfocusing_respects_power_and_covertness(desk_scenario, rng):
    sc = desk_scenario
    for _ in range(5):
        ps = PhaseState.random(rng, 3, 15)
        G = sim_response(sc.stack, ps)
        res = beamfocusing_step(cn(rng, 4, 2) * 1e-2, sc.channels, G, sc.cfg)
        assert res.status == OPTIMAL
        rep = check_feasibility(res.value, ps, sc.stack, sc.channels, sc.cfg, G=G)
        assert rep.power <= sc.cfg.p_max + 1e-6
        assert rep.covert_ok


def test_surrogate_state_tangency(desk_scenario, rng):
    sc = desk_scenario
    G = sim_response(sc.stack, PhaseState.random(rng, 3, 15))
    V = cn(rng, 4, 2) * 0.1
    A, _ = link_gains(sc.channels, G, V)
    state = SurrogateState.from_gains(A / math.sqrt(sc.cfg.noise_power))
    P = np.abs(A) ** 2 / sc.cfg.noise_power
    np.testing.assert_allclose(state.sinr, np.diag(P) / (P.sum(1) - np.diag(P) + 1), rtol=1e-12)
    assert np.all(state.denom > 0)


def test_beamfocusing_sca_monotone(desk_scenario, rng):
    sc = desk_scenario
    ps = PhaseState.random(rng, 3, 15)
    from simcovert.ao import init_beamformer

    G = sim_response(sc.stack, ps)
    V0 = init_beamformer(sc.channels, G, sc.cfg)
    V, rep, iters, trace = beamfocusing_to_convergence(V0, ps, sc.stack, sc.channels, sc.cfg, G=G)
    assert np.all(np.diff(trace) >= -1e-5)
    assert rep.feasible and iters >= 1


def test_phase_layer_solution_in_unit_disk(desk_scenario, rng):
    sc = desk_scenario
    from simcovert.ao import init_state

    V, ps = init_state(sc.cfg, sc.channels, sc.stack, rng)
    for l in (1, 2, 3):
        res = phase_layer_step(sc.channels, sc.stack, ps, l, V, sc.cfg)
        assert res.value is not None
        assert np.max(np.abs(res.value)) <= 1 + 1e-8


def test_phase_layer_expansion_point_feasible(desk_scenario, rng):
    """The current phases satisfy every surrogate constraint they generate."""
    sc = desk_scenario
    from simcovert.ao import init_state

    V, ps = init_state(sc.cfg, sc.channels, sc.stack, rng)
    rep = check_feasibility(V, ps, sc.stack, sc.channels, sc.cfg)
    prog = lower_phase_layer(sc.channels, sc.stack, ps, 2, V, sc.cfg, soft=not rep.qos_ok)
    sol = solve_conic(prog)
    assert sol.status == OPTIMAL
    # optimum of the surrogate is at least the value at the expansion point
    assert sol.objective >= np.sum(np.log2(1 + rep.sinr)) - 1e-6 - (0 if rep.qos_ok else 1e3 * 10)


def test_tiny_instance_against_grid():
    from simcovert.acceptance import grid_optimum, tiny_instance

    for seed in range(3):
        cfg, stack, channels, V, phases = tiny_instance(seed)
        _, rep, _ = phase_layer_to_convergence(V, phases, 1, stack, channels, cfg)
        assert rep.sum_rate >= 0.98 * grid_optimum(stack, channels, V, cfg.noise_power)


def test_dimension_mismatch(desk_scenario, rng):
    sc = desk_scenario
    with pytest.raises(ValueError):
        lower_beamfocusing(cn(rng, 3, 2), sc.channels, cn(rng, 15, 4), sc.cfg)
