"""Exploratory-convergent gradient re-aggregation.

A client's local round produces an ordered set of parameter displacements,
one per mini-batch step. Half of them (the *convergent* steps) are chosen
greedily so their running sum stays as short as possible; the rest (the
*exploratory* steps) are damped by ``beta``; the recombined vector is then
rescaled to the length of the plain sum so only the direction changes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GradientSetTooSmall, SplitError
from .linalg import norm, ordered_sum

log = logging.getLogger(__name__)


@dataclass
class GradientSet:
    """Per-step displacements ``w^l - w^(l+1)`` of one client round, shape (tau, P)."""

    steps: np.ndarray

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.float64)
        if self.steps.ndim != 2:
            raise ValueError("steps must be a (tau, P) array")

    @property
    def tau(self) -> int:
        return self.steps.shape[0]

    @property
    def dim(self) -> int:
        return self.steps.shape[1]

    def subset_sum(self, indices) -> np.ndarray:
        return ordered_sum((self.steps[i] for i in sorted(indices)), length=self.dim)

    def total(self) -> np.ndarray:
        return self.subset_sum(range(self.tau))


@dataclass(frozen=True)
class EcgrSplit:
    pi: tuple
    pi_prime: tuple
    beta: float

    @classmethod
    def from_selection(cls, selected, tau, beta):
        pi = tuple(sorted(int(i) for i in selected))
        chosen = set(pi)
        return cls(pi, tuple(i for i in range(tau) if i not in chosen), float(beta))


@dataclass
class ReaggregatedGradient:
    g_prime: np.ndarray
    gamma: float
    degenerate: bool = False


@dataclass
class HerdingPath:
    """Greedy trace: pick order and the candidate norms seen at each pick."""

    order: list
    candidates: list  # per step: dict index -> ||S + step_index||
    partial_norms: list  # ||S_l|| after each pick


def herding_path(gs: GradientSet, k=None) -> HerdingPath:
    if gs.tau < 2:
        raise GradientSetTooSmall(f"need at least 2 local steps, got {gs.tau}")
    k = gs.tau // 2 if k is None else k
    remaining = list(range(gs.tau))
    S = np.zeros(gs.dim)
    order, candidates, partial = [], [], []
    for _ in range(k):
        cand = {e: norm(S + gs.steps[e]) for e in remaining}
        # remaining is ascending, so min() resolves ties to the lowest index
        e = min(remaining, key=lambda j: cand[j])
        S = S + gs.steps[e]
        remaining.remove(e)
        order.append(e)
        candidates.append(cand)
        partial.append(cand[e])
    return HerdingPath(order, candidates, partial)


def herding_select(gs: GradientSet, beta: float = 1.0) -> EcgrSplit:
    """Pick ``floor(tau/2)`` convergent steps by greedy herding.

    At each pick the remaining step that minimises the norm of the running
    sum is added. Ties go to the lowest step index.
    """
    path = herding_path(gs)
    return EcgrSplit.from_selection(path.order, gs.tau, beta)


def _check_split(gs: GradientSet, split: EcgrSplit):
    pi, rest = set(split.pi), set(split.pi_prime)
    if pi & rest or (pi | rest) != set(range(gs.tau)):
        raise SplitError("split does not partition the gradient set")
    if len(split.pi) != gs.tau // 2:
        raise SplitError(f"convergent set must hold {gs.tau // 2} steps, has {len(split.pi)}")
    if not 0.0 <= split.beta <= 1.0:
        raise SplitError(f"beta must lie in [0, 1], got {split.beta}")


def re_aggregate(gs: GradientSet, split: EcgrSplit) -> ReaggregatedGradient:
    _check_split(gs, split)
    g = gs.total()
    g_norm = norm(g)
    if g_norm == 0.0:
        return ReaggregatedGradient(np.zeros(gs.dim), 0.0, False)
    v = gs.subset_sum(split.pi) + split.beta * gs.subset_sum(split.pi_prime)
    v_norm = norm(v)
    if v_norm == 0.0:
        log.warning("re-aggregated direction vanished; keeping the plain sum")
        return ReaggregatedGradient(g, 1.0, True)
    gamma = g_norm / v_norm
    return ReaggregatedGradient(gamma * v, gamma, False)


def apply_ecgr(gs: GradientSet, beta: float) -> tuple:
    """Herding split followed by re-aggregation; returns ``(result, split)``."""
    split = herding_select(gs, beta)
    return re_aggregate(gs, split), split


@dataclass
class SelectionMask:
    round: int
    client: int
    tau: int
    selected_indices: list
    beta: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SelectionMask":
        d = json.loads(line)
        return cls(int(d["round"]), int(d["client"]), int(d["tau"]),
                   [int(i) for i in d["selected_indices"]], float(d["beta"]))
