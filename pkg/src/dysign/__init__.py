"""Spiking dynamic-graph node classification.

A numpy/scipy engine that runs a leaky integrate-and-fire spiking graph
network over a sequence of graph snapshots, trains it with a trace-based
variation gradient, and evaluates it with Macro/Micro-F1.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    DysignError,
    NodeIndexError,
    ParseError,
    ValidationError,
)
from .graph import (
    DynamicGraph,
    IngestConfig,
    Snapshot,
    load_dynamic_graph,
    make_snapshot,
    normalize_adjacency,
    normalize_features,
    write_dynamic_graph,
)
from .neuron import NeuronConfig, RateAccumulator, bernoulli_encode, concentration_check, lif_step, rate_update
from .model import ModelParams, classify, forward_timestep, init_params, run_dynamic
from .gradients import GradientBundle, bptt_oracle, finite_difference_check, instance_gradient, variation_gradient
from .training import TrainConfig, TrainRun, train
from .metrics import SplitSpec, evaluate, lambda_sweep, macro_micro_f1, majority_baseline, make_splits
from .checkpoint import load_checkpoint, save_checkpoint
from .synthetic import dynamic_sbm

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "DataError", "DivergenceError", "DysignError", "NodeIndexError",
    "ParseError", "ValidationError", "DynamicGraph", "IngestConfig", "Snapshot", "load_dynamic_graph",
    "make_snapshot", "normalize_adjacency", "normalize_features", "write_dynamic_graph", "NeuronConfig",
    "RateAccumulator", "bernoulli_encode", "concentration_check", "lif_step", "rate_update", "ModelParams",
    "classify", "forward_timestep", "init_params", "run_dynamic", "GradientBundle", "bptt_oracle",
    "finite_difference_check", "instance_gradient", "variation_gradient", "TrainConfig", "TrainRun", "train",
    "SplitSpec", "evaluate", "lambda_sweep", "macro_micro_f1", "majority_baseline", "make_splits",
    "load_checkpoint", "save_checkpoint", "dynamic_sbm",
]
