"""Outage-constrained coordinated beamforming for the MISO interference channel."""

from .model import (
    BeamformerSet,
    ChannelSet,
    generate_channel_set,
    instantaneous_rate,
    sample_channels,
)
from .outage import closed_form_outage, empirical_outage, tighten_rates
from .utility import UtilitySpec, utility_gradient, utility_value
from .solver import ConvexProgram, Solution, SolverConfig, kkt_residual, solve_barrier
from .sca import gaussian_randomize, mrt_init, rank_reduce, run_sca, zf_init
from .dist import overhead_count, run_distributed
from .harness import ExperimentConfig, exhaustive_search, power_grid_oracle, run_sweep
from .estimators import DistributedSCABeamformer, SCABeamformer

__all__ = [
    "BeamformerSet",
    "ChannelSet",
    "ConvexProgram",
    "DistributedSCABeamformer",
    "ExperimentConfig",
    "SCABeamformer",
    "Solution",
    "SolverConfig",
    "UtilitySpec",
    "closed_form_outage",
    "empirical_outage",
    "exhaustive_search",
    "gaussian_randomize",
    "generate_channel_set",
    "instantaneous_rate",
    "kkt_residual",
    "mrt_init",
    "overhead_count",
    "power_grid_oracle",
    "rank_reduce",
    "run_distributed",
    "run_sca",
    "run_sweep",
    "sample_channels",
    "solve_barrier",
    "tighten_rates",
    "utility_gradient",
    "utility_value",
    "zf_init",
]
