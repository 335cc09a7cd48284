"""
Simulador de cinética química estocástica, determinista e híbrida.
"""

# La versión se define antes de importar los submódulos (cli la usa)
__version__ = '1.0.0'

from .errores import (KineticsError, ConfigError, ModelError, NegativeAmountError, IntegrationError,
                      StateSpaceError, CMEError, EnsembleError, SweepError)
from .config_manager import ConfigManager, IntegratorConfig, TauConfig, HybridConfig
from .model import (Species, Reaction, ReactionNetwork, SystemState, Trajectory, ConservationLaw,
                    parse_model, load_model, render_model, propensity, propensities,
                    continuous_propensities, apply_reaction, conservation_laws, make_grid)
from .rng import RngStream
from .stochastic import ssa_step, simulate_ssa, select_tau, tau_leap_step, cle_step, simulate_approx, REJECTED
from .deterministic import DormandPrinceIntegrator, rk_step, integrate_rre
from .hybrid import Partition, partition_reactions, next_jump, simulate_hybrid
from .cme_oracle import (StateSpace, ProbabilityVector, enumerate_states, build_generator, solve_cme,
                         stationary_distribution, initial_distribution, marginal_distribution,
                         distribution_moments)
from .ensemble import (MethodSpec, EnsembleStatistics, SweepConfig, simulate, derive_run_seed,
                       run_ensemble, collect_trajectories, merge_statistics, parameter_sweep,
                       parse_axis, parse_sweep_file, endpoint_histogram, total_variation)
from .graficos import emit_plot

__all__ = [
    'KineticsError', 'ConfigError', 'ModelError', 'NegativeAmountError', 'IntegrationError',
    'StateSpaceError', 'CMEError', 'EnsembleError', 'SweepError',
    'ConfigManager', 'IntegratorConfig', 'TauConfig', 'HybridConfig',
    'Species', 'Reaction', 'ReactionNetwork', 'SystemState', 'Trajectory', 'ConservationLaw',
    'parse_model', 'load_model', 'render_model', 'propensity', 'propensities',
    'continuous_propensities', 'apply_reaction', 'conservation_laws', 'make_grid',
    'RngStream',
    'ssa_step', 'simulate_ssa', 'select_tau', 'tau_leap_step', 'cle_step', 'simulate_approx', 'REJECTED',
    'DormandPrinceIntegrator', 'rk_step', 'integrate_rre',
    'Partition', 'partition_reactions', 'next_jump', 'simulate_hybrid',
    'StateSpace', 'ProbabilityVector', 'enumerate_states', 'build_generator', 'solve_cme',
    'stationary_distribution', 'initial_distribution', 'marginal_distribution', 'distribution_moments',
    'MethodSpec', 'EnsembleStatistics', 'SweepConfig', 'simulate', 'derive_run_seed', 'run_ensemble',
    'collect_trajectories', 'merge_statistics', 'parameter_sweep', 'parse_axis', 'parse_sweep_file',
    'endpoint_histogram', 'total_variation',
    'emit_plot',
]
