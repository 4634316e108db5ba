"""netident: infer node-invariant governing equations of networked dynamical
systems from time series, then predict by integrating the learned model.

The pipeline has two stages: per-node sparse regressions on a small node
sample are clustered into a consensus support mask, and the shared
coefficients of the masked terms are then fitted on the full graph by
minimizing multi-step rollout error. The parameter count depends only on the
number of active terms, never on the network size.
"""

__version__ = "0.1.0"

from .basis import BasisLibrary, LibrarySpec, build_library, dominant_periods
from .dynamics import SystemParams, default_params, initial_state, simulate, true_coefficients
from .errors import (
    ConfigError,
    ConsensusError,
    EdgeListParseError,
    EvaluationError,
    InsufficientDataError,
    IntegrationError,
    MetricError,
    NetidentError,
    OptimizationError,
    ParameterError,
)
from .experiment import ExperimentConfig, run, sweep
from .fitting import FitConfig, FitResult, fit, refine_mask, rollout, rollout_gradient, rollout_loss
from .graph import Graph, generate, load_edge_list, remove_edges, remove_nodes, save_edge_list
from .metrics import mape, mse, r2, rmse, smape, trajectory_report
from .model import ModelSpec, equation_strings, model_rhs
from .predict import SegmentPrediction, horizon_error, integrate, segment_predict
from .support import (
    SparseCoefficients,
    SupportConfig,
    SupportMask,
    SupportResult,
    consensus_mask,
    dbscan,
    discover_support,
    estimate_derivatives,
    node_regression,
)
from .trajectory import Trajectory, add_noise, load_binary, load_csv, save_binary, save_csv, subsample, truncate

__all__ = [
    "BasisLibrary",
    "LibrarySpec",
    "build_library",
    "dominant_periods",
    "SystemParams",
    "default_params",
    "initial_state",
    "simulate",
    "true_coefficients",
    "ExperimentConfig",
    "run",
    "sweep",
    "FitConfig",
    "FitResult",
    "fit",
    "refine_mask",
    "rollout",
    "rollout_gradient",
    "rollout_loss",
    "Graph",
    "generate",
    "load_edge_list",
    "remove_edges",
    "remove_nodes",
    "save_edge_list",
    "mape",
    "mse",
    "r2",
    "rmse",
    "smape",
    "trajectory_report",
    "ModelSpec",
    "equation_strings",
    "model_rhs",
    "SegmentPrediction",
    "horizon_error",
    "integrate",
    "segment_predict",
    "SparseCoefficients",
    "SupportConfig",
    "SupportMask",
    "SupportResult",
    "consensus_mask",
    "dbscan",
    "discover_support",
    "estimate_derivatives",
    "node_regression",
    "Trajectory",
    "add_noise",
    "load_binary",
    "load_csv",
    "save_binary",
    "save_csv",
    "subsample",
    "truncate",
    "NetidentError",
    "ParameterError",
    "ConfigError",
    "ConsensusError",
    "EdgeListParseError",
    "EvaluationError",
    "InsufficientDataError",
    "IntegrationError",
    "MetricError",
    "OptimizationError",
]
