"""Bayesian fit of the autoregressive space-time temperature model."""
from .data import ModelData, harmonics
from .diagnostics import diagnostics, ess, split_rhat
from .fit import fit
from .likelihood import conditional_mean, log_likelihood, mean_surface, model_mean
from .params import McmcConfig, ModelParameters, PriorConfig, TruthSpec
from .sampler import ChainState, SamplerContext, SamplerError, gibbs_sweep, initial_state
from .store import PosteriorStore

__all__ = [
    "ChainState", "McmcConfig", "ModelData", "ModelParameters", "PosteriorStore", "PriorConfig",
    "SamplerContext", "SamplerError", "TruthSpec", "conditional_mean", "diagnostics", "ess", "fit",
    "gibbs_sweep", "harmonics", "initial_state", "log_likelihood", "mean_surface", "model_mean",
    "split_rhat",
]
