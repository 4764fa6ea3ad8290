"""Penalty objective, its analytic phase gradient, and the Armijo phase update."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PhaseState, SimStack, all_splits, sim_response
from .config import SystemConfig
from .metrics import link_gains, nu, sinr_from_gains


@dataclass(frozen=True)
class PenaltyConfig:
    mu1: float = 10.0
    mu2: float = 100.0
    alpha0: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not (self.mu1 > 0 and self.mu2 > 0 and self.alpha0 > 0):
            raise ValueError("penalty weights and initial step must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("Armijo shrink factor must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "PenaltyConfig":
        return cls(cfg.penalty_mu1, cfg.penalty_mu2, cfg.armijo_alpha0, cfg.armijo_shrink,
                   cfg.max_armijo_backtracks)


def covert_ratio(B: np.ndarray, noise: float) -> np.ndarray:
    """z_u = delta_1 / delta_0 for every warden."""
    return 1.0 + (np.abs(B) ** 2).sum(axis=1) / noise


def penalty_terms(A, B, noise: float, cfg: SystemConfig):
    gammas = sinr_from_gains(A, noise)
    z = covert_ratio(B, noise)
    g = nu(z - 1.0)
    threshold = cfg.kl_budget / cfg.observations
    qos = np.minimum(gammas - cfg.gamma_min, 0.0)
    covert = np.maximum(g - threshold, 0.0)
    return gammas, z, g, qos, covert


def penalty_objective(channels: ChannelSet, stack: SimStack, phases: PhaseState, V,
                      cfg: SystemConfig, G=None) -> float:
    """F = R - mu1 * sum(QoS shortfall^2) - mu2 * sum(covertness excess^2)."""
    if G is None:
        G = sim_response(stack, phases)
    A, B = link_gains(channels, G, V)
    gammas, _, _, qos, covert = penalty_terms(A, B, cfg.noise_power, cfg)
    rate = float(np.sum(np.log2(1.0 + gammas)))
    return rate - cfg.penalty_mu1 * float(np.sum(qos**2)) - cfg.penalty_mu2 * float(np.sum(covert**2))


@dataclass
class GradientCache:
    """Per-layer quantities shared by every partial derivative.

    ``A[k, i] = h_k^H G v_i`` and ``B[u, i] = h_u^H G v_i``. ``dA[l, n, k, i]``
    is e^{j theta_n^l} [h_k^H G_L^l]_n [G_R^l v_i]_n, i.e. the rank-one pick of
    e^{j theta} h^H G_L E_nn G_R v; ``dB`` is the same for wardens.
    """

    A: np.ndarray
    B: np.ndarray
    dA: np.ndarray
    dB: np.ndarray
    noise: float


def gradient_cache(channels: ChannelSet, stack: SimStack, phases: PhaseState, V,
                   noise: float) -> GradientCache:
    splits = all_splits(stack, phases)
    G = splits[-1][0] @ (phases.phi[-1][:, None] * splits[-1][1])
    A, B = link_gains(channels, G, V)
    dA, dB = [], []
    for l, (G_L, G_R) in enumerate(splits):
        right = phases.phi[l][:, None] * (G_R @ V)  # (N, K)
        dA.append((channels.h_users.conj() @ G_L).T[:, :, None] * right[:, None, :])
        dB.append((channels.h_wardens.conj() @ G_L).T[:, :, None] * right[:, None, :])
    return GradientCache(A, B, np.array(dA), np.array(dB), noise)


def psi(cache: GradientCache) -> np.ndarray:
    """psi[l, n, k, i] = Im[e^{j theta} (h_k^H G v_i)^* h_k^H G_L E_nn G_R v_i]."""
    return np.imag(np.conj(cache.A)[None, None] * cache.dA)


def sinr_partials(cache: GradientCache) -> np.ndarray:
    """d gamma_k / d theta_n^l for all (k, l, n); shape (K, L, N)."""
    P = np.abs(cache.A) ** 2
    signal = np.diag(P)
    interference = P.sum(axis=1) - signal
    varrho = 1.0 / (interference + cache.noise)
    gammas = signal * varrho
    ps = psi(cache)
    own = np.einsum("lnkk->lnk", ps)
    cross = ps.sum(axis=3) - own
    grad = 2.0 * varrho * (gammas * cross - own)
    return np.transpose(grad, (2, 0, 1))


def sinr_partial(cache: GradientCache, k: int, n: int, l: int) -> float:
    """Single entry of :func:`sinr_partials`; ``l`` and ``n`` are 0-based."""
    return float(sinr_partials(cache)[k, l, n])


def covert_partials(cache: GradientCache) -> np.ndarray:
    """d g_u / d theta_n^l for all (u, l, n); shape (U, L, N)."""
    z = covert_ratio(cache.B, cache.noise)
    im = np.imag(np.conj(cache.B)[None, None] * cache.dB).sum(axis=3)  # (L, N, U)
    grad = (-2.0 / cache.noise) * (1.0 - 1.0 / z) * im
    return np.transpose(grad, (2, 0, 1))


def covert_partial(cache: GradientCache, u: int, n: int, l: int) -> float:
    return float(covert_partials(cache)[u, l, n])


@dataclass
class GradientField:
    grad: np.ndarray
    cache: GradientCache
    converged: bool = False

    @property
    def shape(self):
        return self.grad.shape


def full_gradient(channels: ChannelSet, stack: SimStack, phases: PhaseState, V,
                  cfg: SystemConfig) -> GradientField:
    """dF/dtheta for every (layer, atom), shape (L, N)."""
    noise = cfg.noise_power
    cache = gradient_cache(channels, stack, phases, V, noise)
    gammas, _, g, qos, covert = penalty_terms(cache.A, cache.B, noise, cfg)
    d_gamma = sinr_partials(cache)
    weight = 1.0 / (math.log(2) * (1.0 + gammas)) - 2.0 * cfg.penalty_mu1 * qos
    grad = np.tensordot(weight, d_gamma, axes=1)
    if channels.num_wardens:
        grad = grad - 2.0 * cfg.penalty_mu2 * np.tensordot(covert, covert_partials(cache), axes=1)
    return GradientField(grad, cache)


def normalize_gradient(gf: GradientField) -> GradientField:
    """Rescale so the largest-magnitude partial equals pi; zero fields are flagged converged."""
    kappa = float(np.max(np.abs(gf.grad))) if gf.grad.size else 0.0
    if kappa == 0.0 or not np.isfinite(kappa):
        return GradientField(gf.grad.copy(), gf.cache, converged=True)
    return GradientField(gf.grad * (np.pi / kappa), gf.cache)


@dataclass
class ArmijoResult:
    phases: PhaseState
    value: float
    alpha: float
    backtracks: int
    accepted: bool
    extra: object = None


def armijo_phase_step(phases: PhaseState, direction: np.ndarray, current_value: float,
                      evaluate, penalty: PenaltyConfig) -> ArmijoResult:
    """Backtracking ascent step theta <- theta + alpha * direction.

    ``evaluate(phases)`` returns ``(value, extra)``; in the AO driver it
    re-solves the beamformers for the trial phases and returns F. The step
    shrinks by ``penalty.shrink`` while the trial value is below
    ``current_value``. If no trial improves within ``max_backtracks`` the
    original phases are returned unchanged.
    """
    if not np.any(direction):
        return ArmijoResult(phases, current_value, 0.0, 0, True)
    alpha = penalty.alpha0
    for backtracks in range(penalty.max_backtracks):
        trial = PhaseState(phases.theta + alpha * direction)
        value, extra = evaluate(trial)
        if value >= current_value:
            return ArmijoResult(trial, value, alpha, backtracks, True, extra)
        alpha *= penalty.shrink
    return ArmijoResult(phases, current_value, alpha, penalty.max_backtracks, False)
