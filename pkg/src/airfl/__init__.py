"""Multi-RIS over-the-air federated learning: optimization and simulation."""
from .config import ConfigError, SystemConfig, config_from_dict, validate_config, DEFAULT_CONFIG
from .channel import (ChannelSet, PhaseConfig, Topology, combined_channel, draw_scenario,
                      generate_topology, rng_stream, sample_channels)
from .aircomp import (AirCompNormalizer, TransceiverState, aggregate, closed_form_transceiver,
                      mse, reduced_mse)
from .convex import ConicProblem, SdpProblem, solve_conic, solve_sdp
from .receive import optimal_receive_scalar, receive_vector, sdr_receive_vector
from .phase import PhaseResult, design_phases, sca_phase_design
from .selection import SelectionInfeasible, SelectionState, dc_select, ky_fan_norm
from .altopt import MultiRISAirCompOptimizer, alternating_optimize, complexity_report, objective_U
from .flsim import (SCHEMES, LearningTrace, LifetimeModel, network_lifetime, run_regression_fl,
                    sweep_experiment, test_error)

__version__ = "0.1.0"
