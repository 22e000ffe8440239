"""Bayesian optimization from mixed direct queries and pairwise comparisons."""

from .accounting import CostModel, Trace, TraceEntry
from .direct import Box, maximize, maximize_constrained
from .gp import GPPosterior, fit_kernel
from .harness import (ExperimentConfig, PolicySpec, load_config,
                      run_experiment, save_config, sweep_cost_ratio,
                      verify_oracle)
from .info_gain import BetaSchedule, InfoGainCurve
from .kernels import Kernel
from .oracles import borda_truth, make_oracle, true_optimum
from .policies import POLICIES, PolicyConfig, RunResult, run

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule",
    "Box",
    "CostModel",
    "ExperimentConfig",
    "GPPosterior",
    "InfoGainCurve",
    "Kernel",
    "POLICIES",
    "PolicyConfig",
    "PolicySpec",
    "RunResult",
    "Trace",
    "TraceEntry",
    "borda_truth",
    "fit_kernel",
    "load_config",
    "make_oracle",
    "maximize",
    "maximize_constrained",
    "run",
    "run_experiment",
    "save_config",
    "sweep_cost_ratio",
    "true_optimum",
    "verify_oracle",
    "__version__",
]
