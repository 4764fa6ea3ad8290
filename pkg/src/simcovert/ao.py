"""Alternating-optimization drivers and the random / codebook benchmarks."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (ChannelSet, PhaseState, SimStack, all_splits, build_channels,
                      build_sim_stack, sim_response)
from .config import Placement, SystemConfig, place_nodes, scenario_streams
from .metrics import LinkReport, check_feasibility, link_gains
from .pga import (PenaltyConfig, armijo_phase_step, full_gradient, normalize_gradient,
                  penalty_objective)
from .sca import (beamfocusing_step, beamfocusing_to_convergence, improves, phase_layer_step,
                  project_unit_modulus, tau_bound)

log = logging.getLogger(__name__)

ALGORITHMS = ("sca", "pga", "random", "codebook")
MONOTONE_SLACK = 1e-5


@dataclass(frozen=True)
class Scenario:
    cfg: SystemConfig
    stack: SimStack
    channels: ChannelSet
    placement: Placement | None = None
    seed: int | None = None


def build_scenario(cfg: SystemConfig, seed: int | None = None) -> tuple[Scenario, np.random.Generator]:
    """Place nodes and build channels; returns the scenario and the algorithm stream."""
    seed = cfg.rng_seed if seed is None else seed
    placement_rng, algo_rng = scenario_streams(seed)
    placement = place_nodes(cfg, placement_rng)
    return Scenario(cfg, build_sim_stack(cfg), build_channels(placement, cfg), placement, seed), algo_rng


@dataclass
class SolveRecord:
    algorithm: str
    V: np.ndarray
    phases: PhaseState
    trace: list
    report: LinkReport
    seconds: float
    seed: int | None
    iterations: int
    status: str = "ok"
    steps: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    @property
    def sum_rate(self) -> float:
        return self.report.sum_rate

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "status": self.status,
            "feasible": self.feasible,
            "sum_rate": self.sum_rate,
            "iterations": self.iterations,
            "seconds": self.seconds,
            "trace": list(map(float, self.trace)),
            "V_re": self.V.real.tolist(),
            "V_im": self.V.imag.tolist(),
            "theta": self.phases.theta.tolist(),
            "report": self.report.to_dict(),
        }

    def save(self, path) -> None:
        """Write ``<path>.json`` with the solution and ``<path>_trace.csv`` with the trace."""
        path = Path(path)
        path.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=1))
        with open(path.parent / f"{path.stem}_trace.csv", "w", newline="") as fh:
            if self.steps:
                writer = csv.DictWriter(fh, fieldnames=list(self.steps[0]))
                writer.writeheader()
                writer.writerows(self.steps)
            else:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "sum_rate"])
                writer.writerows(enumerate(self.trace))


def load_record_solution(path):
    """(V, PhaseState, stored dict) from a saved record's JSON."""
    data = json.loads(Path(path).with_suffix(".json").read_text())
    V = np.array(data["V_re"]) + 1j * np.array(data["V_im"])
    return V, PhaseState(np.array(data["theta"])), data


# initialisation -------------------------------------------------------------
def matched_filter(channels: ChannelSet, G: np.ndarray, total_power: float) -> np.ndarray:
    eff = channels.h_users.conj() @ G  # (K, M)
    norms = np.linalg.norm(eff, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    V = (eff / norms).conj().T
    return V * np.sqrt(total_power / channels.num_users)


def covert_scale(V, channels: ChannelSet, G, cfg: SystemConfig, iters: int = 100) -> np.ndarray:
    """Shrink V by bisection until every warden meets the KL budget."""
    if channels.num_wardens == 0:
        return V
    from .metrics import kl_from_gains

    def ok(s):
        _, B = link_gains(channels, G, s * V)
        return np.all(kl_from_gains(B, cfg.noise_power, cfg.observations) <= cfg.kl_budget)

    if ok(1.0):
        return V
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo * V


def init_beamformer(channels, G, cfg) -> np.ndarray:
    return covert_scale(matched_filter(channels, G, cfg.p_max / 2), channels, G, cfg)


def init_state(cfg: SystemConfig, channels: ChannelSet, stack: SimStack, rng):
    """Random phases (first draw from ``rng``) and half-power covert-safe matched filters."""
    phases = PhaseState.random(rng, stack.num_layers, stack.num_atoms)
    G = sim_response(stack, phases)
    return init_beamformer(channels, G, cfg), phases


# AO with per-layer SCA ----------------------------------------------------------
def _layer_sequence(cfg: SystemConfig, L: int):
    return range(L, 0, -1) if cfg.layer_order == "descending" else range(1, L + 1)


def restore_qos(V, phases, stack, channels, cfg, G, report):
    """Beamfocusing SCA steps (QoS softened when needed) until QoS holds."""
    for _ in range(cfg.max_sca_iters):
        if report.feasible:
            break
        res = beamfocusing_step(V, channels, G, cfg)
        if res.value is None:
            break
        cand = check_feasibility(res.value, phases, stack, channels, cfg, G=G)
        if not improves(cand, report):
            break
        V, report = res.value, cand
    return V, report


def run_ao_sca(cfg: SystemConfig, channels: ChannelSet, stack: SimStack, rng,
               seed: int | None = None) -> SolveRecord:
    """Alternate one beamfocusing SCA solve with per-layer phase SCA solves.

    Every candidate update (beamformers or a projected layer) is kept only
    if the joint problem's constraints still hold and the sum rate does not
    drop, so the recorded trace is non-decreasing.
    """
    t0 = time.perf_counter()
    V, phases = init_state(cfg, channels, stack, rng)
    G = sim_response(stack, phases)
    report = check_feasibility(V, phases, stack, channels, cfg, G=G)
    V, report = restore_qos(V, phases, stack, channels, cfg, G, report)
    trace = [report.sum_rate]
    status, it = "ok", 0
    for it in range(1, cfg.max_ao_iters + 1):
        prev = report.sum_rate
        res = beamfocusing_step(V, channels, G, cfg)
        if res.value is not None:
            cand = check_feasibility(res.value, phases, stack, channels, cfg, G=G)
            if improves(cand, report):
                V, report = res.value, cand
        elif res.status == "numerical-failure" and it == 1:
            log.warning("beamfocusing solve failed: %s", res.solution.info)
        for l in _layer_sequence(cfg, stack.num_layers):
            step = phase_layer_step(channels, stack, phases, l, V, cfg)
            if step.value is None:
                continue
            cand_phases = phases.with_layer(l, project_unit_modulus(step.value))
            cand_G = sim_response(stack, cand_phases)
            cand_V = V
            cand = check_feasibility(V, cand_phases, stack, channels, cfg, G=cand_G)
            if not (cand.feasible and improves(cand, report)):
                # projection can undo the relaxed solution's warden null; re-fit V first
                repair = beamfocusing_step(V, channels, cand_G, cfg)
                if repair.value is not None:
                    cand_V = repair.value
                    cand = check_feasibility(cand_V, cand_phases, stack, channels, cfg, G=cand_G)
            if improves(cand, report):
                phases, G, V, report = cand_phases, cand_G, cand_V, cand
        trace.append(report.sum_rate)
        if abs(report.sum_rate - prev) <= cfg.ao_tol * max(abs(prev), 1e-12):
            break
    if not np.isfinite(report.sum_rate):
        status = "failed"
    return SolveRecord("sca", V, phases, trace, report, time.perf_counter() - t0, seed, it, status)


# AO with PGA phases -------------------------------------------------------------
def run_ao_pga(cfg: SystemConfig, channels: ChannelSet, stack: SimStack, rng,
               seed: int | None = None) -> SolveRecord:
    """Penalty-gradient phase ascent with an Armijo line search.

    With ``cfg.pga_inner_resolve`` (the default) every trial step re-solves
    the beamfocusing surrogate before F is compared; otherwise the line
    search keeps V fixed and V is refreshed once per outer iteration.
    """
    t0 = time.perf_counter()
    penalty = PenaltyConfig.from_config(cfg)
    V, phases = init_state(cfg, channels, stack, rng)
    F = penalty_objective(channels, stack, phases, V, cfg)
    trace, steps = [F], []
    it = 0

    def resolve(trial_phases, V_from):
        G_t = sim_response(stack, trial_phases)
        res = beamfocusing_step(V_from, channels, G_t, cfg)
        V_t = res.value if res.value is not None else V_from
        return penalty_objective(channels, stack, trial_phases, V_t, cfg, G=G_t), V_t

    for it in range(1, cfg.max_ao_iters + 1):
        gf = normalize_gradient(full_gradient(channels, stack, phases, V, cfg))
        if gf.converged:
            break
        if cfg.pga_inner_resolve:
            evaluate = lambda trial: resolve(trial, V)
        else:
            evaluate = lambda trial: (penalty_objective(channels, stack, trial, V, cfg), V)
        step = armijo_phase_step(phases, gf.grad, F, evaluate, penalty)
        prev = F
        if step.accepted and step.extra is not None:
            phases, V, F = step.phases, step.extra, step.value
            if not cfg.pga_inner_resolve:
                F_new, V_new = resolve(phases, V)
                if F_new >= F:
                    F, V = F_new, V_new
        report = check_feasibility(V, phases, stack, channels, cfg)
        trace.append(F)
        steps.append({"iteration": it, "F": F, "sum_rate": report.sum_rate,
                      "max_violation": report.worst_violation, "alpha": step.alpha,
                      "backtracks": step.backtracks})
        if abs(F - prev) <= cfg.ao_tol * max(abs(prev), 1e-12):
            break
    report = check_feasibility(V, phases, stack, channels, cfg)
    return SolveRecord("pga", V, phases, trace, report, time.perf_counter() - t0, seed, it,
                       steps=steps)


# benchmarks -------------------------------------------------------------------
def _fixed_phase_solve(cfg, channels, stack, phases):
    G = sim_response(stack, phases)
    V0 = init_beamformer(channels, G, cfg)
    return beamfocusing_to_convergence(V0, phases, stack, channels, cfg, G=G)


def random_phase_baseline(cfg: SystemConfig, channels: ChannelSet, stack: SimStack, rng,
                          seed: int | None = None) -> SolveRecord:
    """Random unit-modulus phases; beamfocusing SCA run to convergence."""
    t0 = time.perf_counter()
    phases = PhaseState.random(rng, stack.num_layers, stack.num_atoms)
    V, report, iters, trace = _fixed_phase_solve(cfg, channels, stack, phases)
    return SolveRecord("random", V, phases, trace, report, time.perf_counter() - t0, seed, iters)


def codebook_baseline(cfg: SystemConfig, channels: ChannelSet, stack: SimStack, rng,
                      codebook_size: int = 100, seed: int | None = None) -> SolveRecord:
    """Best feasible sum rate over ``codebook_size`` random phase tables.

    The first table is the same draw the random benchmark makes from an
    identically seeded stream.
    """
    if codebook_size < 1:
        raise ValueError("codebook_size must be at least 1")
    t0 = time.perf_counter()
    best = None
    trace = []
    for _ in range(codebook_size):
        phases = PhaseState.random(rng, stack.num_layers, stack.num_atoms)
        V, report, _, _ = _fixed_phase_solve(cfg, channels, stack, phases)
        trace.append(report.sum_rate if report.feasible else float("nan"))
        key = (report.feasible, report.sum_rate if report.feasible else -report.worst_violation)
        if best is None or key > best[0]:
            best = (key, V, phases, report)
    _, V, phases, report = best
    return SolveRecord("codebook", V, phases, trace, report, time.perf_counter() - t0, seed,
                       codebook_size)


def run_algorithm(name: str, scenario: Scenario, rng, codebook_size: int = 100) -> SolveRecord:
    cfg, ch, st = scenario.cfg, scenario.channels, scenario.stack
    if name == "sca":
        return run_ao_sca(cfg, ch, st, rng, seed=scenario.seed)
    if name == "pga":
        return run_ao_pga(cfg, ch, st, rng, seed=scenario.seed)
    if name == "random":
        return random_phase_baseline(cfg, ch, st, rng, seed=scenario.seed)
    if name == "codebook":
        return codebook_baseline(cfg, ch, st, rng, codebook_size, seed=scenario.seed)
    raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


def solve_seed(cfg: SystemConfig, algorithm: str, seed: int, codebook_size: int = 100) -> SolveRecord:
    """Build the seed's scenario and run one algorithm on a fresh algorithm stream."""
    scenario, rng = build_scenario(cfg, seed)
    return run_algorithm(algorithm, scenario, rng, codebook_size)
