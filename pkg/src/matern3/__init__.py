"""Generalized Matérn type-III repulsive point processes: simulation and Gibbs inference."""

from .diagnostics import effective_sample_size, fano_factor, l_function, l_function_inhom
from .geometry import SiteWindow, Window, distance, sort_by_birth
from .gibbs import ChainState, SamplerAbort, run_chain
from .gp import GpSpec, sigmoid
from .io import load_pattern, write_pattern
from .kernels import Hardcore, Probabilistic, Softcore
from .matern import (
    AugmentedPattern,
    log_density_matern,
    log_joint,
    shadow_at,
    shadow_volume,
    simulate_matern,
)
from .nonstat import run_chain_nonstat, simulate_nonstat_matern
from .poisson import make_rng, sample_homogeneous
from .priors import PriorSpec
from .trace import Trace, repulsion_statistic

__all__ = [
    "effective_sample_size",
    "fano_factor",
    "l_function",
    "l_function_inhom",
    "SiteWindow",
    "Window",
    "distance",
    "sort_by_birth",
    "ChainState",
    "SamplerAbort",
    "run_chain",
    "GpSpec",
    "sigmoid",
    "load_pattern",
    "write_pattern",
    "Hardcore",
    "Probabilistic",
    "Softcore",
    "AugmentedPattern",
    "log_density_matern",
    "log_joint",
    "shadow_at",
    "shadow_volume",
    "simulate_matern",
    "run_chain_nonstat",
    "simulate_nonstat_matern",
    "make_rng",
    "sample_homogeneous",
    "PriorSpec",
    "Trace",
    "repulsion_statistic",
]

__version__ = "0.1.0"
