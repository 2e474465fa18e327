"""Federated learning simulator with exploratory-convergent gradient re-aggregation (ECGR)."""

from .data import (
    ClientPartition,
    Dataset,
    PartitionSpec,
    dirichlet_partition,
    epoch_batches,
    load_idx,
    make_synthetic,
)
from .ecgr import EcgrSplit, GradientSet, ReaggregatedGradient, herding_select, re_aggregate
from .fedopt import AlgoConfig, MetricRecord, TrainingResult, run_training
from .linalg import RngStream, axpy, dot, norm
from .model import ModelSpec, evaluate, init_params, loss_and_grad

__version__ = "0.1.0"
