"""Successive convex approximation for the beamfocusing and per-layer phase subproblems.

Both subproblems are built once per problem shape as parametrized cvxpy
programs and re-solved with fresh data every SCA step. Internally all gains
are divided by the noise standard deviation so the noise floor is 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import bisect

from .channel import ChannelSet, PhaseState, SimStack, all_splits, sim_response
from .conic import INFEASIBLE, OPTIMAL, ConicProgram, ConicSolution, solve_conic
from .config import SystemConfig
from .metrics import check_feasibility, link_gains

SOFT_QOS_WEIGHT = 1e3


def tau_bound(eps: float, observations: int) -> float:
    """Largest tau >= 1 with tau - ln(tau) - 1 <= 2 eps^2 / J.

    The left side is increasing for tau > 1, so the covertness region on
    the warden's power ratio is exactly the box [1, tau_max].
    """
    rhs = 2.0 * eps**2 / observations
    if rhs <= 0:
        return 1.0
    f = lambda t: t - math.log(t) - 1.0 - rhs
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
    return bisect(f, 1.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)


def taylor_coefficients(a: complex, denom_ref: float):
    """Slope on the denominator and complex weight on the numerator's linear form."""
    if not denom_ref > 0:
        raise ValueError("expansion-point denominator must be positive")
    return -(abs(a) / denom_ref) ** 2, np.conj(a) / denom_ref


def taylor_minorant(a: complex, denom_ref: float, numerator, denom):
    """First-order lower bound of |numerator|^2 / denom around (a, denom_ref).

    ``numerator`` is the complex value of the linear form at the evaluation
    point; the bound is tight when ``numerator == a`` and ``denom == denom_ref``.
    """
    slope, weight = taylor_coefficients(a, denom_ref)
    return slope * np.asarray(denom) + 2.0 * np.real(weight * np.asarray(numerator))


def project_unit_modulus(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    mag = np.abs(phi)
    out = np.ones_like(phi)
    nz = mag > 0
    out[nz] = phi[nz] / mag[nz]
    return out


@dataclass
class SurrogateState:
    """Expansion point of one SCA step (noise-normalized units).

    ``gains`` holds the linear forms evaluated at the expansion point:
    row k, column i is h_k^H G v_i / sigma. ``denom`` is each user's
    interference-plus-noise at that point and ``sinr`` the matching SINR.
    """

    gains: np.ndarray
    denom: np.ndarray
    sinr: np.ndarray

    @classmethod
    def from_gains(cls, A_norm: np.ndarray) -> "SurrogateState":
        P = np.abs(A_norm) ** 2
        signal = np.diag(P)
        denom = P.sum(axis=1) - signal + 1.0
        return cls(A_norm, denom, signal / denom)


# program builders -----------------------------------------------------------
_CACHE: dict = {}


def _off_diagonal(K: int) -> np.ndarray:
    return 1.0 - np.eye(K)


def _objective(rate_var, soft, slack):
    obj = cp.sum(cp.log(1 + rate_var)) / math.log(2)
    if soft:
        obj = obj - SOFT_QOS_WEIGHT * slack
    return cp.Maximize(obj)


def _beamfocusing_template(M: int, K: int, U: int, soft: bool) -> ConicProgram:
    key = ("p3", M, K, U, soft)
    if key in _CACHE:
        return _CACHE[key]
    Vr, Vi = cp.Variable((M, K), name="v_re"), cp.Variable((M, K), name="v_im")
    rho, varpi = cp.Variable(K, name="rho"), cp.Variable(K, name="varpi")
    prm = {
        "g_re": cp.Parameter((K + U, M), name="g_re"),
        "g_im": cp.Parameter((K + U, M), name="g_im"),
        "q_re": cp.Parameter((K, M), name="q_re"),
        "q_im": cp.Parameter((K, M), name="q_im"),
        "slope": cp.Parameter(K, nonpos=True, name="slope"),
        "gamma_min": cp.Parameter(nonneg=True, name="gamma_min"),
        "sqrt_pmax": cp.Parameter(nonneg=True, name="sqrt_pmax"),
        "tau_max": cp.Parameter(nonneg=True, name="tau_max"),
    }
    variables = {"v_re": Vr, "v_im": Vi, "rho": rho, "varpi": varpi}
    slack = cp.Variable(nonneg=True, name="qos_slack") if soft else 0.0
    Zr = prm["g_re"] @ Vr - prm["g_im"] @ Vi
    Zi = prm["g_re"] @ Vi + prm["g_im"] @ Vr
    power = cp.square(Zr) + cp.square(Zi)
    linear = cp.sum(cp.multiply(prm["q_re"], Vr.T) - cp.multiply(prm["q_im"], Vi.T), axis=1)
    cons = [
        rho >= prm["gamma_min"] - slack,
        rho <= cp.multiply(prm["slope"], varpi) + 2 * linear,
        cp.sum(cp.multiply(_off_diagonal(K), power[:K]), axis=1) + 1 <= varpi,
        cp.norm(cp.hstack([cp.vec(Vr, order="F"), cp.vec(Vi, order="F")])) <= prm["sqrt_pmax"],
    ]
    if U:
        tau = cp.Variable(U, name="tau")
        variables["tau"] = tau
        cons += [cp.sum(power[K:], axis=1) <= tau - 1, tau >= 1, tau <= prm["tau_max"]]
    if soft:
        variables["qos_slack"] = slack
    prog = ConicProgram(cp.Problem(_objective(rho, soft, slack), cons), variables, prm,
                        name=f"beamfocusing M={M} K={K} U={U}{' soft' if soft else ''}")
    _CACHE[key] = prog
    return prog


def _phase_template(N: int, K: int, U: int, soft: bool) -> ConicProgram:
    key = ("p5", N, K, U, soft)
    if key in _CACHE:
        return _CACHE[key]
    cols = K * K + U * K
    pr, pi = cp.Variable(N, name="phi_re"), cp.Variable(N, name="phi_im")
    ups, vs = cp.Variable(K, name="upsilon"), cp.Variable(K, name="varsigma")
    prm = {
        "h_re": cp.Parameter((N, cols), name="h_re"),
        "h_im": cp.Parameter((N, cols), name="h_im"),
        "q_re": cp.Parameter((K, N), name="q_re"),
        "q_im": cp.Parameter((K, N), name="q_im"),
        "slope": cp.Parameter(K, nonpos=True, name="slope"),
        "gamma_min": cp.Parameter(nonneg=True, name="gamma_min"),
        "tau_max": cp.Parameter(nonneg=True, name="tau_max"),
    }
    variables = {"phi_re": pr, "phi_im": pi, "upsilon": ups, "varsigma": vs}
    slack = cp.Variable(nonneg=True, name="qos_slack") if soft else 0.0
    Zr = pr @ prm["h_re"] - pi @ prm["h_im"]
    Zi = pr @ prm["h_im"] + pi @ prm["h_re"]
    power = cp.square(Zr) + cp.square(Zi)
    user_mask = np.kron(np.eye(K), np.ones(K)) * np.tile(_off_diagonal(K), K)
    user_mask = np.hstack([user_mask, np.zeros((K, U * K))])
    cons = [
        ups >= prm["gamma_min"] - slack,
        ups <= cp.multiply(prm["slope"], vs) + 2 * (prm["q_re"] @ pr - prm["q_im"] @ pi),
        user_mask @ power + 1 <= vs,
        cp.norm(cp.vstack([pr, pi]), 2, axis=0) <= 1,
    ]
    if U:
        zeta = cp.Variable(U, name="zeta")
        variables["zeta"] = zeta
        warden_mask = np.hstack([np.zeros((U, K * K)), np.kron(np.eye(U), np.ones(K))])
        cons += [warden_mask @ power <= zeta - 1, zeta >= 1, zeta <= prm["tau_max"]]
    if soft:
        variables["qos_slack"] = slack
    prog = ConicProgram(cp.Problem(_objective(ups, soft, slack), cons), variables, prm,
                        name=f"phase-layer N={N} K={K} U={U}{' soft' if soft else ''}")
    _CACHE[key] = prog
    return prog


def lower_beamfocusing(V, channels: ChannelSet, G: np.ndarray, cfg: SystemConfig,
                       soft: bool = False, state: SurrogateState | None = None) -> ConicProgram:
    """Convex beamfocusing surrogate around the expansion point ``V``."""
    M, K = V.shape
    if G.shape[1] != M or channels.num_users != K:
        raise ValueError("dimension mismatch between V, G and channels")
    U = channels.num_wardens
    scale = 1.0 / math.sqrt(cfg.noise_power)
    rows = np.vstack([channels.h_users.conj(), channels.h_wardens.conj()]) @ G * scale
    if state is None:
        state = SurrogateState.from_gains(rows[:K] @ V)
    a = np.diag(state.gains)
    slope, weight = taylor_coefficients_vec(a, state.denom)
    q = weight[:, None] * rows[:K]
    prog = _beamfocusing_template(M, K, U, soft)
    prog.set(g_re=rows.real, g_im=rows.imag, q_re=q.real, q_im=q.imag, slope=slope,
             gamma_min=cfg.gamma_min, sqrt_pmax=math.sqrt(cfg.p_max),
             tau_max=tau_bound(cfg.covert_eps, cfg.observations))
    return prog


def taylor_coefficients_vec(a, denom):
    denom = np.asarray(denom, dtype=float)
    if np.any(denom <= 0):
        raise ValueError("expansion-point denominators must be positive")
    return -(np.abs(a) / denom) ** 2, np.conj(a) / denom


def phase_layer_channels(channels: ChannelSet, G_L, G_R, V, scale: float) -> np.ndarray:
    """Columns of effective channels h_tilde for every (user, stream) then (warden, stream)."""
    left = np.vstack([channels.h_users.conj(), channels.h_wardens.conj()]) @ G_L  # (K+U, N)
    right = G_R @ V  # (N, K)
    eff = left[:, :, None] * right[None, :, :]  # (K+U, N, K)
    return scale * np.transpose(eff, (1, 0, 2)).reshape(G_L.shape[0], -1)


def lower_phase_layer(channels: ChannelSet, stack: SimStack, phases: PhaseState, l: int, V,
                      cfg: SystemConfig, soft: bool = False, splits=None) -> ConicProgram:
    """Convex surrogate in layer ``l``'s phase vector, other layers and V fixed."""
    if splits is None:
        splits = all_splits(stack, phases)
    G_L, G_R = splits[l - 1]
    K, U, N = channels.num_users, channels.num_wardens, stack.num_atoms
    H = phase_layer_channels(channels, G_L, G_R, V, 1.0 / math.sqrt(cfg.noise_power))
    phi = phases.phi[l - 1]
    A = (phi @ H[:, :K * K]).reshape(K, K)
    state = SurrogateState.from_gains(A)
    own = H[:, [k * K + k for k in range(K)]].T  # (K, N)
    slope, weight = taylor_coefficients_vec(np.diag(A), state.denom)
    q = weight[:, None] * own
    prog = _phase_template(N, K, U, soft)
    prog.set(h_re=H.real, h_im=H.imag, q_re=q.real, q_im=q.imag, slope=slope,
             gamma_min=cfg.gamma_min, tau_max=tau_bound(cfg.covert_eps, cfg.observations))
    return prog


# solve helpers ----------------------------------------------------------------
@dataclass
class StepResult:
    value: np.ndarray | None
    status: str
    softened: bool
    solution: ConicSolution | None


def _solve_with_fallback(build) -> StepResult:
    sol = solve_conic(build(False))
    softened = False
    if sol.status == INFEASIBLE:
        sol = solve_conic(build(True))
        softened = True
    return StepResult(None, sol.status, softened, sol)


def beamfocusing_step(V, channels, G, cfg) -> StepResult:
    """One SCA solve of the beamfocusing surrogate, softening QoS once if infeasible."""
    res = _solve_with_fallback(lambda soft: lower_beamfocusing(V, channels, G, cfg, soft=soft))
    if res.status == OPTIMAL:
        vals = res.solution.values
        res.value = vals["v_re"] + 1j * vals["v_im"]
    return res


def phase_layer_step(channels, stack, phases, l, V, cfg, splits=None) -> StepResult:
    """One SCA solve for layer ``l``; returns the relaxed (unprojected) phase vector."""
    res = _solve_with_fallback(lambda soft: lower_phase_layer(channels, stack, phases, l, V, cfg,
                                                              soft=soft, splits=splits))
    if res.status == OPTIMAL:
        vals = res.solution.values
        res.value = vals["phi_re"] + 1j * vals["phi_im"]
    return res


def improves(candidate, incumbent, slack: float = 0.0) -> bool:
    """Accept a candidate report if it is feasible-at-least-as-much and not worse."""
    if incumbent.feasible and not candidate.feasible:
        return False
    if not incumbent.feasible and candidate.worst_violation < incumbent.worst_violation - 1e-12:
        return True
    return candidate.sum_rate >= incumbent.sum_rate - slack


def beamfocusing_to_convergence(V, phases: PhaseState, stack: SimStack, channels: ChannelSet,
                                cfg: SystemConfig, G=None):
    """Iterate the beamfocusing SCA with phases fixed; returns (V, report, iters, trace)."""
    if G is None:
        G = sim_response(stack, phases)
    report = check_feasibility(V, phases, stack, channels, cfg, G=G)
    trace = [report.sum_rate]
    iters = 0
    for iters in range(1, cfg.max_sca_iters + 1):
        res = beamfocusing_step(V, channels, G, cfg)
        if res.value is None:
            break
        cand = check_feasibility(res.value, phases, stack, channels, cfg, G=G)
        if not improves(cand, report):
            break
        prev = report.sum_rate
        V, report = res.value, cand
        trace.append(report.sum_rate)
        if report.feasible and abs(report.sum_rate - prev) <= cfg.sca_tol * max(abs(prev), 1e-12):
            break
    return V, report, iters, trace


def phase_layer_to_convergence(V, phases: PhaseState, l: int, stack: SimStack,
                               channels: ChannelSet, cfg: SystemConfig):
    """Repeat the layer-``l`` SCA solve plus projection while the sum rate improves.

    Returns (phases, report, iters). V and the other layers stay fixed.
    """
    report = check_feasibility(V, phases, stack, channels, cfg)
    iters = 0
    for iters in range(1, cfg.max_sca_iters + 1):
        res = phase_layer_step(channels, stack, phases, l, V, cfg)
        if res.value is None:
            break
        cand_phases = phases.with_layer(l, project_unit_modulus(res.value))
        cand = check_feasibility(V, cand_phases, stack, channels, cfg)
        if not improves(cand, report):
            break
        prev = report.sum_rate
        phases, report = cand_phases, cand
        if abs(report.sum_rate - prev) <= cfg.sca_tol * max(abs(prev), 1e-12):
            break
    return phases, report, iters
