"""SINR, rate, KL covertness and feasibility of a candidate design."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PhaseState, SimStack, sim_response
from .config import SystemConfig

POWER_TOL = 1e-6
KL_TOL = 1e-6
RATE_TOL = 1e-6


def link_gains(channels: ChannelSet, G: np.ndarray, V: np.ndarray):
    """Matrices A[k, i] = h_k^H G v_i for users and B[u, i] for wardens."""
    return channels.h_users.conj() @ G @ V, channels.h_wardens.conj() @ G @ V


def sinr_from_gains(A: np.ndarray, noise: float) -> np.ndarray:
    P = np.abs(A) ** 2
    signal = np.diag(P)
    return signal / (P.sum(axis=1) - signal + noise)


def sinr(channels: ChannelSet, G, V, noise: float, k: int) -> float:
    if noise <= 0:
        raise ValueError("noise power must be positive")
    A = channels.h_users[k].conj() @ G @ V
    P = np.abs(A) ** 2
    return float(P[k] / (P.sum() - P[k] + noise))


def sum_rate(gammas) -> float:
    return float(np.sum(np.log2(1.0 + np.asarray(gammas, dtype=float))))


def nu(x):
    """x - ln(1 + x), the per-observation KL between the two hypotheses.

    Small arguments use the series x^2/2 - x^3/3 + ... to avoid cancellation.
    """
    x = np.asarray(x, dtype=float)
    series = x * x * (0.5 - x * (1 / 3 - x * (0.25 - x * 0.2)))
    with np.errstate(invalid="ignore"):
        direct = x - np.log1p(x)
    out = np.where(np.abs(x) < 1e-3, series, direct)
    return out if out.ndim else float(out)


def kl_from_gains(B: np.ndarray, noise: float, observations: int) -> np.ndarray:
    x = (np.abs(B) ** 2).sum(axis=1) / noise
    return observations * nu(x)


def kl_divergence(channels: ChannelSet, G, V, noise: float, observations: int, u: int) -> float:
    if noise <= 0 or observations < 1:
        raise ValueError("need positive noise and at least one observation")
    b = channels.h_wardens[u].conj() @ G @ V
    return float(kl_from_gains(b[None, :], noise, observations)[0])


def dep_floor(divergence: float) -> float:
    """Pinsker lower bound on a warden's minimum detection error probability."""
    if divergence < 0:
        raise ValueError("KL divergence cannot be negative")
    return max(0.0, 1.0 - math.sqrt(divergence / 2.0))


@dataclass
class LinkReport:
    sinr: np.ndarray
    rates: np.ndarray
    sum_rate: float
    kl: np.ndarray
    dep_floor: np.ndarray
    power: float
    rate_slack: np.ndarray
    power_slack: float
    kl_slack: np.ndarray
    unit_modulus_error: float

    @property
    def qos_ok(self) -> bool:
        return bool(np.all(self.rate_slack >= -RATE_TOL))

    @property
    def power_ok(self) -> bool:
        return self.power_slack >= -POWER_TOL

    @property
    def covert_ok(self) -> bool:
        return bool(np.all(self.kl_slack >= -KL_TOL))

    @property
    def unit_modulus_ok(self) -> bool:
        return self.unit_modulus_error <= 1e-12

    @property
    def feasible(self) -> bool:
        return self.qos_ok and self.power_ok and self.covert_ok and self.unit_modulus_ok

    @property
    def worst_violation(self) -> float:
        slacks = [0.0, self.power_slack, *self.rate_slack, *self.kl_slack]
        return float(max(0.0, -min(slacks)))

    CSV_COLUMNS = ("sum_rate", "feasible", "power_w", "min_rate", "max_kl", "min_dep_floor",
                   "worst_violation")

    def csv_row(self) -> dict:
        return {
            "sum_rate": self.sum_rate,
            "feasible": int(self.feasible),
            "power_w": self.power,
            "min_rate": float(self.rates.min()) if self.rates.size else 0.0,
            "max_kl": float(self.kl.max()) if self.kl.size else 0.0,
            "min_dep_floor": float(self.dep_floor.min()) if self.dep_floor.size else 1.0,
            "worst_violation": self.worst_violation,
        }

    def to_dict(self) -> dict:
        return {
            "sinr": self.sinr.tolist(), "rates": self.rates.tolist(), "sum_rate": self.sum_rate,
            "kl": self.kl.tolist(), "dep_floor": self.dep_floor.tolist(), "power": self.power,
            "feasible": self.feasible, "qos_ok": self.qos_ok, "power_ok": self.power_ok,
            "covert_ok": self.covert_ok, "worst_violation": self.worst_violation,
        }


def check_feasibility(V, phases: PhaseState, stack: SimStack, channels: ChannelSet,
                      cfg: SystemConfig, G=None) -> LinkReport:
    """Evaluate every constraint of the joint problem with signed slacks."""
    if G is None:
        G = sim_response(stack, phases)
    noise = cfg.noise_power
    A, B = link_gains(channels, G, V)
    gammas = sinr_from_gains(A, noise)
    rates = np.log2(1.0 + gammas)
    kl = kl_from_gains(B, noise, cfg.observations)
    power = float(np.sum(np.abs(V) ** 2))
    return LinkReport(
        sinr=gammas,
        rates=rates,
        sum_rate=float(rates.sum()),
        kl=kl,
        dep_floor=np.array([dep_floor(max(d, 0.0)) for d in kl]),
        power=power,
        rate_slack=rates - cfg.min_rate_bpshz,
        power_slack=cfg.p_max - power,
        kl_slack=cfg.kl_budget - kl,
        unit_modulus_error=float(np.max(np.abs(np.abs(phases.phi) - 1.0))),
    )
