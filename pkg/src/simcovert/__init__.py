"""Joint beamfocusing and stacked-intelligent-metasurface phase design for
near-field multi-user covert communication."""
from .ao import (ALGORITHMS, Scenario, SolveRecord, build_scenario, codebook_baseline,
                 random_phase_baseline, run_ao_pga, run_ao_sca, run_algorithm, solve_seed)
from .channel import (ChannelSet, PhaseState, SimStack, build_channels, build_sim_stack,
                      effective_phase_channel, inter_layer_distance, near_field_channel,
                      propagation_coeff, sim_response, split_response)
from .config import (ConfigError, Placement, SystemConfig, load_config, place_nodes,
                     profile_config, validate_config)
from .estimators import CodebookDesigner, PGADesigner, RandomPhaseDesigner, SCADesigner
from .harness import SweepSpec, aggregate, emit_plot_data, run_sweep
from .metrics import LinkReport, check_feasibility, kl_divergence, sinr, sum_rate
from .pga import full_gradient, normalize_gradient, penalty_objective
from .sca import beamfocusing_step, phase_layer_step, tau_bound

__version__ = "0.1.0"
