"""FDD IRS-assisted massive MIMO with JSDM per-group processing.

Channel-statistics construction, approximate block-diagonalization
pre-beamforming, deterministic-equivalent rate analysis, IRS phase and group
power optimization, and a Monte-Carlo validation harness.
"""

from .channel import (ChannelRealization, ChannelSampler, CovarianceSet,
                      aggregate_covariance, aggregate_covariances,
                      apply_csi_error, build_bs_correlation,
                      build_covariance_set, build_irs_correlation,
                      build_los_h1, path_loss, sample_channels)
from .config import SystemConfig, apply_sweep_value, replace_config
from .detequiv import (DEContext, DESolution, de_sinr, de_sum_se,
                       compute_auxiliaries, rzf_alpha, solve_de,
                       solve_delta_fixed_point)
from .gradient import (GradientReport, PgaResult, backtracking_line_search,
                       finite_difference_check, initial_phases,
                       project_unit_modulus, projected_gradient_ascent,
                       random_phases, sinr_gradient, trace_derivative)
from .montecarlo import McResult, instantaneous_sinr, run_monte_carlo, rzf_precoder
from .power import (AoResult, PowerCoefficients, WmmseResult,
                    alternating_optimization, sinr_coefficients,
                    waterfill_group, wmmse_power_allocation)
from .prebeam import (EigenStructure, PrebeamformerSet, build_prebeamformer,
                      build_prebeamformer_set, effective_covariance,
                      karhunen_loeve, select_dominant)
from .scenario import (ResultRow, Scenario, emit_results, feedback_overhead,
                       load_scenario, run_scenario)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
