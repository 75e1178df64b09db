"""Dynamic Bayesian optimization with a Wasserstein observation-relevancy criterion."""

from .kernels import Hyperparameters, KernelFamily, Observation, SpaceTimePoint, covariance
from .gp import Dataset, GramState, fit_mle, log_marginal_likelihood, posterior
from .criterion import conv_matrix, relevancy_ratio, relevancy_ratios, w2_prior_sq, w2_removal_sq
from .controller import WDBO, RemovalBudget, WdboConfig, budget_advance, prune
from .baselines import GPUCB, RGPUCB, TVGPUCB, BaselineConfig
from .harness import CostModel, ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Hyperparameters", "KernelFamily", "Observation", "SpaceTimePoint", "covariance",
    "Dataset", "GramState", "fit_mle", "log_marginal_likelihood", "posterior",
    "conv_matrix", "relevancy_ratio", "relevancy_ratios", "w2_prior_sq", "w2_removal_sq",
    "WDBO", "RemovalBudget", "WdboConfig", "budget_advance", "prune",
    "GPUCB", "RGPUCB", "TVGPUCB", "BaselineConfig",
    "CostModel", "ExperimentConfig", "run_experiment",
]
