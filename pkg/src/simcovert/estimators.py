"""scikit-learn style wrappers around the design algorithms.

Each designer is a ``BaseEstimator``: hyperparameters live in ``__init__``
(so ``get_params``/``set_params``/``clone`` work), ``fit(scenario)`` runs the
optimisation and stores fitted attributes with a trailing underscore.

    >>> from simcovert import SCADesigner, build_scenario, profile_config
    >>> scenario, _ = build_scenario(profile_config("desk"), seed=0)
    >>> designer = SCADesigner(max_ao_iters=10).fit(scenario)
    >>> designer.score(scenario) > 0
    True
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ao import Scenario, codebook_baseline, random_phase_baseline, run_ao_pga, run_ao_sca
from .channel import PhaseState
from .config import scenario_streams
from .metrics import check_feasibility


def check_scenario(scenario) -> Scenario:
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scenario).__name__}")
    cfg, stack, ch = scenario.cfg, scenario.stack, scenario.channels
    N, M = stack.num_atoms, stack.num_antennas
    if ch.h_users.shape != (cfg.num_users, N) or ch.h_wardens.shape != (cfg.num_wardens, N):
        raise ValueError("channel shapes do not match the scenario config")
    if M != cfg.num_tx_antennas or stack.num_layers != cfg.num_layers:
        raise ValueError("SIM stack does not match the scenario config")
    for arr in (stack.W1, *stack.W, ch.h_users, ch.h_wardens):
        if not np.all(np.isfinite(arr)):
            raise ValueError("scenario contains non-finite channel entries")
    return scenario


def check_beamformer(V, num_antennas: int, num_users: int) -> np.ndarray:
    V = np.asarray(V, dtype=complex)
    if V.shape != (num_antennas, num_users):
        raise ValueError(f"beamformer shape {V.shape} != ({num_antennas}, {num_users})")
    if not np.all(np.isfinite(V)):
        raise ValueError("beamformer has non-finite entries")
    return V


def check_phases(phases, num_layers: int, num_atoms: int) -> PhaseState:
    if not isinstance(phases, PhaseState):
        phases = PhaseState(np.asarray(phases, dtype=float))
    if phases.theta.shape != (num_layers, num_atoms):
        raise ValueError(f"phase table shape {phases.theta.shape} != ({num_layers}, {num_atoms})")
    return phases


class _Designer(BaseEstimator):
    _config_params: tuple = ()

    def _rng(self, scenario):
        if self.random_state is not None:
            return np.random.default_rng(self.random_state)
        seed = scenario.seed if scenario.seed is not None else scenario.cfg.rng_seed
        return scenario_streams(seed)[1]

    def _config(self, scenario):
        return scenario.cfg.replace(**{name: getattr(self, name) for name in self._config_params})

    def _run(self, cfg, scenario, rng):
        raise NotImplementedError

    def fit(self, scenario, y=None):
        scenario = check_scenario(scenario)
        cfg = self._config(scenario)
        self.record_ = self._run(cfg, scenario, self._rng(scenario))
        self.V_ = self.record_.V
        self.phases_ = self.record_.phases
        self.report_ = self.record_.report
        self.n_iter_ = self.record_.iterations
        return self

    def evaluate(self, scenario):
        """Link report of the fitted design on ``scenario``."""
        check_is_fitted(self, "record_")
        scenario = check_scenario(scenario)
        V = check_beamformer(self.V_, scenario.stack.num_antennas, scenario.channels.num_users)
        phases = check_phases(self.phases_, scenario.stack.num_layers, scenario.stack.num_atoms)
        return check_feasibility(V, phases, scenario.stack, scenario.channels, scenario.cfg)

    def score(self, scenario, y=None) -> float:
        """Sum covert rate (bps/Hz) of the fitted design on ``scenario``."""
        return self.evaluate(scenario).sum_rate


class SCADesigner(_Designer):
    """Alternating optimisation with SCA beamfocusing and per-layer SCA phases."""

    _config_params = ("max_ao_iters", "ao_tol", "layer_order")

    def __init__(self, max_ao_iters=50, ao_tol=1e-4, layer_order="descending", random_state=None):
        self.max_ao_iters = max_ao_iters
        self.ao_tol = ao_tol
        self.layer_order = layer_order
        self.random_state = random_state

    def _run(self, cfg, scenario, rng):
        return run_ao_sca(cfg, scenario.channels, scenario.stack, rng, seed=scenario.seed)


class PGADesigner(_Designer):
    """Alternating optimisation with penalty-gradient phase ascent."""

    _config_params = ("max_ao_iters", "ao_tol", "penalty_mu1", "penalty_mu2", "armijo_alpha0",
                      "armijo_shrink", "max_armijo_backtracks", "pga_inner_resolve")

    def __init__(self, max_ao_iters=50, ao_tol=1e-4, penalty_mu1=10.0, penalty_mu2=100.0,
                 armijo_alpha0=1.0, armijo_shrink=0.5, max_armijo_backtracks=30,
                 pga_inner_resolve=True, random_state=None):
        self.max_ao_iters = max_ao_iters
        self.ao_tol = ao_tol
        self.penalty_mu1 = penalty_mu1
        self.penalty_mu2 = penalty_mu2
        self.armijo_alpha0 = armijo_alpha0
        self.armijo_shrink = armijo_shrink
        self.max_armijo_backtracks = max_armijo_backtracks
        self.pga_inner_resolve = pga_inner_resolve
        self.random_state = random_state

    def _run(self, cfg, scenario, rng):
        return run_ao_pga(cfg, scenario.channels, scenario.stack, rng, seed=scenario.seed)


class RandomPhaseDesigner(_Designer):
    """Random phases with SCA beamfocusing to convergence."""

    _config_params = ("max_sca_iters", "sca_tol")

    def __init__(self, max_sca_iters=30, sca_tol=1e-4, random_state=None):
        self.max_sca_iters = max_sca_iters
        self.sca_tol = sca_tol
        self.random_state = random_state

    def _run(self, cfg, scenario, rng):
        return random_phase_baseline(cfg, scenario.channels, scenario.stack, rng, seed=scenario.seed)


class CodebookDesigner(_Designer):
    """Best of ``codebook_size`` random phase tables."""

    _config_params = ("max_sca_iters", "sca_tol")

    def __init__(self, codebook_size=100, max_sca_iters=30, sca_tol=1e-4, random_state=None):
        self.codebook_size = codebook_size
        self.max_sca_iters = max_sca_iters
        self.sca_tol = sca_tol
        self.random_state = random_state

    def _run(self, cfg, scenario, rng):
        return codebook_baseline(cfg, scenario.channels, scenario.stack, rng, self.codebook_size,
                                 seed=scenario.seed)


DESIGNERS = {"sca": SCADesigner, "pga": PGADesigner, "random": RandomPhaseDesigner,
             "codebook": CodebookDesigner}
