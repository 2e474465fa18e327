"""Federated training loop: FedAvg, FedProx, FedNova and Scaffold, each with
an optional ECGR step on the client before upload.

Server learning rate is fixed at 1, every client participates in every round,
and each client runs one local epoch per round with a fresh momentum buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .analysis import deviation_record, true_gradient
from .data import ClientPartition, Dataset, batch_stream, epoch_batches
from .ecgr import EcgrSplit, GradientSet, SelectionMask, apply_ecgr, herding_select
from .errors import AggregationError, DimensionError, GradientSetTooSmall
from .linalg import STREAM_INIT, RngStream, norm, ordered_sum
from .model import ModelSpec, evaluate, init_params, loss_and_grad

ALGORITHMS = ("fedavg", "fedprox", "fednova", "scaffold")


@dataclass
class AlgoConfig:
    algorithm: str = "fedavg"
    ecgr_enabled: bool = False
    beta: float = 0.2
    mu: float = 0.0
    lr: float = 0.001
    lr_decay_every: int = 10
    lr_decay_factor: float = 0.5
    momentum: float = 0.9
    batch_size: int = 128
    rounds: int = 100

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.mu < 0 or (self.mu > 0 and self.algorithm != "fedprox"):
            raise ValueError("mu > 0 is only meaningful for fedprox")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.lr <= 0 or self.batch_size <= 0 or self.rounds < 0:
            raise ValueError("lr and batch_size must be positive, rounds non-negative")

    def lr_at(self, round_: int) -> float:
        if self.lr_decay_every <= 0:
            return self.lr
        return self.lr * self.lr_decay_factor ** (round_ // self.lr_decay_every)


@dataclass
class ClientState:
    client_id: int
    indices: np.ndarray
    rng: RngStream
    control: Optional[np.ndarray] = None


@dataclass
class ServerState:
    w: np.ndarray
    round: int = 0
    control: Optional[np.ndarray] = None
    lr_global: float = 1.0


@dataclass
class ClientUpload:
    upload: np.ndarray
    tau: int
    gradient_set: GradientSet
    raw: np.ndarray  # plain sum of steps, before ECGR / normalisation
    ecgr_sum: np.ndarray  # after ECGR, before FedNova normalisation
    final_params: np.ndarray
    new_control: Optional[np.ndarray] = None
    split: Optional[EcgrSplit] = None
    degenerate: bool = False


def local_train(w_t, batches, grad_fn: Callable, cfg: AlgoConfig, lr: float,
                c_i=None, c=None):
    """Run one local epoch of momentum SGD from ``w_t``.

    ``grad_fn(params, batch)`` returns the mini-batch loss gradient. Returns
    the per-step displacements and the final local parameters.
    """
    if len(batches) < 2:
        raise GradientSetTooSmall(f"client has {len(batches)} batch(es), need at least 2")
    w_t = np.asarray(w_t, dtype=np.float64)
    scaffold = cfg.algorithm == "scaffold"
    if scaffold:
        c_i = np.zeros_like(w_t) if c_i is None else c_i
        c = np.zeros_like(w_t) if c is None else c
        correction = c - c_i
    w = w_t.copy()
    m = np.zeros_like(w)
    steps = np.empty((len(batches), w.size))
    for lam, batch in enumerate(batches):
        d = grad_fn(w, batch)
        if cfg.algorithm == "fedprox":
            d = d + cfg.mu * (w - w_t)
        elif scaffold:
            d = d + correction
        m = cfg.momentum * m + d
        w_next = w - lr * m
        steps[lam] = w - w_next
        w = w_next
    return GradientSet(steps), w


def model_grad_fn(spec: ModelSpec, ds: Dataset):
    def grad_fn(params, batch):
        return loss_and_grad(spec, params, ds.X[batch], ds.y[batch]).grad
    return grad_fn


def client_round(client: ClientState, w_t, cfg: AlgoConfig, batches, grad_fn,
                 lr: float, server_c=None) -> ClientUpload:
    gs, w_end = local_train(w_t, batches, grad_fn, cfg, lr, client.control, server_c)
    raw = gs.total()
    split, degenerate = None, False
    if cfg.ecgr_enabled:
        res, split = apply_ecgr(gs, cfg.beta)
        g, degenerate = res.g_prime, res.degenerate
    else:
        g = raw
    ecgr_sum = g
    if cfg.algorithm == "fednova":
        g = g / gs.tau

    new_c = None
    if cfg.algorithm == "scaffold":
        c_i = np.zeros_like(w_end) if client.control is None else client.control
        c = np.zeros_like(w_end) if server_c is None else server_c
        new_c = c_i - c + (np.asarray(w_t) - w_end) / (gs.tau * lr)
    return ClientUpload(g, gs.tau, gs, raw, ecgr_sum, w_end, new_c, split, degenerate)


def server_aggregate(uploads, p, taus, cfg: AlgoConfig) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if len(uploads) != len(p) or len(taus) != len(p):
        raise AggregationError("uploads, weights and taus must have equal length")
    if len(p) == 0:
        raise AggregationError("no uploads to aggregate")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise AggregationError("client weights must be non-negative and sum to 1")
    lengths = {np.asarray(u).shape for u in uploads}
    if len(lengths) != 1:
        raise AggregationError("uploads differ in length")
    G = ordered_sum(pi * np.asarray(u, dtype=np.float64) for pi, u in zip(p, uploads))
    if cfg.algorithm == "fednova":
        tau_eff = math.fsum(pi * t for pi, t in zip(p, taus))
        G = tau_eff * G
    return G


def effective_steps(p, taus) -> float:
    return math.fsum(pi * t for pi, t in zip(p, taus))


def global_update(server: ServerState, G, new_controls=None, p=None) -> ServerState:
    G = np.asarray(G, dtype=np.float64)
    if G.shape != server.w.shape:
        raise DimensionError("global update length does not match the model")
    control = server.control
    if new_controls is not None:
        control = ordered_sum(pi * ci for pi, ci in zip(p, new_controls))
    return ServerState(server.w - server.lr_global * G, server.round + 1, control,
                       server.lr_global)


@dataclass
class MetricRecord:
    round: int
    seed: int
    algorithm: str
    ecgr: bool
    beta: float
    test_accuracy: float
    test_loss: float


@dataclass
class TrainingResult:
    metrics: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)  # w after each round
    bookkeeping_error: float = 0.0  # worst relative |sum(steps) - (w_t - w_end)|
    control_error: float = 0.0  # worst |c - sum p_i c_i| seen after an update
    final_params: Optional[np.ndarray] = None


def _rel_err(a, b) -> float:
    scale = max(norm(b), 1e-300)
    return norm(np.asarray(a) - np.asarray(b)) / scale


def run_training(ds_train: Dataset, ds_test: Dataset, partition: ClientPartition,
                 cfg: AlgoConfig, model_spec: ModelSpec, seed: int, *,
                 audit: bool = False, audit_every: int = 1,
                 keep_trajectory: bool = False, init=None) -> TrainingResult:
    """Train for ``cfg.rounds`` rounds and collect per-round measurements.

    With ``audit=True`` each audited round also records, per client, the
    squared distance of the raw and ECGR uploads from the displacement an
    exact full-gradient client would make (see ``analysis.deviation_record``).
    Auditing only reads state.
    """
    w0 = init_params(model_spec, RngStream(seed, (STREAM_INIT,))) if init is None else init
    server = ServerState(np.array(w0, dtype=np.float64))
    if cfg.algorithm == "scaffold":
        server.control = np.zeros_like(server.w)
    clients = [
        ClientState(i, ix, batch_stream(seed, i),
                    np.zeros_like(server.w) if cfg.algorithm == "scaffold" else None)
        for i, ix in enumerate(partition.indices)
    ]
    grad_fn = model_grad_fn(model_spec, ds_train)
    p = partition.weights
    result = TrainingResult()
    if keep_trajectory:
        result.trajectory.append(server.w.copy())

    for t in range(cfg.rounds):
        lr = cfg.lr_at(t)
        audit_now = audit and t % audit_every == 0
        if audit_now:
            full_grad = true_gradient(model_spec, server.w, ds_train)
        uploads = []
        for cl in clients:
            batches = epoch_batches(partition, cl.client_id, cfg.batch_size, cl.rng.child(t))
            up = client_round(cl, server.w, cfg, batches, grad_fn, lr, server.control)
            uploads.append(up)
            result.bookkeeping_error = max(result.bookkeeping_error,
                                           _rel_err(up.raw, server.w - up.final_params))
            if up.split is not None:
                result.masks.append(SelectionMask(t, cl.client_id, up.tau,
                                                  list(up.split.pi), cfg.beta))
            if audit_now:
                split = up.split or herding_select(up.gradient_set, cfg.beta)
                result.deviations.append(
                    deviation_record(t, cl.client_id, up, split, lr * up.tau * full_grad, cfg)
                )
        G = server_aggregate([u.upload for u in uploads], p, [u.tau for u in uploads], cfg)
        new_cs = None
        if cfg.algorithm == "scaffold":
            new_cs = [u.new_control for u in uploads]
            for cl, ci in zip(clients, new_cs):
                cl.control = ci
        server = global_update(server, G, new_cs, p)
        if new_cs is not None:
            mean_c = ordered_sum(pi * cl.control for pi, cl in zip(p, clients))
            result.control_error = max(result.control_error,
                                       norm(server.control - mean_c))
        if keep_trajectory:
            result.trajectory.append(server.w.copy())
        acc, loss = evaluate(model_spec, server.w, ds_test)
        result.metrics.append(MetricRecord(t + 1, seed, cfg.algorithm, cfg.ecgr_enabled,
                                           cfg.beta, acc, loss))
    result.final_params = server.w
    return result
