"""Geometric fluid approximation of finite continuous-time Markov chains.

The workflow embeds the state graph with diffusion maps, regresses the
drift of the embedded chain with a Gaussian process and integrates the
resulting ODE; exact simulation and matrix-exponential transients serve as
references.
"""

from .ctmc import (GeneratorMatrix, Reaction, ReactionNetwork, StateLabel, StateSubset,
                   build_reaction_ctmc, drift_observations, extract_subset, perturb_rates,
                   remove_transitions, uniformise)
from .embed import Embedding, diffusion_map, embed, eigensolve_symmetric, laplacian_eigenmap
from .errors import ConfigError, GfaError, NumericalError
from .fluid import (Trajectory, classical_fluid, classical_fluid_sirs, integrate_gfa,
                    projected_mean, spectral_fluid)
from .fpt import FptCdf, VoronoiClassifier, classify_point, compare_cdfs, fluid_fpt
from .gp import DriftField, SeArdKernel, gp_fit, gp_predict_mean, log_marginal_likelihood
from .models import build_genetic_switch
from .ssa import EnsembleSummary, SsaPath, project_ensemble, ssa_fpt, ssa_simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DriftField", "Embedding", "EnsembleSummary", "FptCdf", "GeneratorMatrix",
    "GfaError", "NumericalError", "Reaction", "ReactionNetwork", "SeArdKernel", "SsaPath",
    "StateLabel", "StateSubset", "Trajectory", "VoronoiClassifier", "build_genetic_switch",
    "build_reaction_ctmc", "classical_fluid", "classical_fluid_sirs", "classify_point",
    "compare_cdfs", "diffusion_map", "drift_observations", "eigensolve_symmetric", "embed",
    "extract_subset", "fluid_fpt", "gp_fit", "gp_predict_mean", "integrate_gfa",
    "laplacian_eigenmap", "log_marginal_likelihood", "perturb_rates", "project_ensemble",
    "projected_mean", "remove_transitions", "spectral_fluid", "ssa_fpt", "ssa_simulate",
    "uniformise",
]
