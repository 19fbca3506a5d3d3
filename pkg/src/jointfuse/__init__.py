"""Bayesian joint models for longitudinal markers and time-to-event outcomes."""

__version__ = "0.1.0"

from .diagnostics import PosteriorSummary, export_plot_data, gelman_rubin, summarize
from .likelihood import JointModel, log_posterior
from .model import (
    Association,
    AssociationSpec,
    BaselineHazardSpec,
    BaselineKind,
    Dataset,
    EventSpec,
    Family,
    MarkerSpec,
    ModelSpec,
    ParamState,
    PriorSet,
    Structure,
    initial_state,
    parameter_names,
    validate_spec,
)
from .sampler import McmcConfig, run, run_chain
from .simulate import SimScenario, simulate_dataset

__all__ = [
    "Association", "AssociationSpec", "BaselineHazardSpec", "BaselineKind", "Dataset",
    "EventSpec", "Family", "JointModel", "MarkerSpec", "McmcConfig", "ModelSpec", "ParamState",
    "PosteriorSummary", "PriorSet", "SimScenario", "Structure", "export_plot_data",
    "gelman_rubin", "initial_state", "log_posterior", "parameter_names", "run", "run_chain",
    "simulate_dataset", "summarize", "validate_spec",
]
