"""Datasets, synthetic data, IDX loading and non-IID client partitioning."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, PartitionError
from .linalg import (
    STREAM_BATCHES,
    STREAM_DATA_CENTERS,
    STREAM_DATA_NOISE,
    STREAM_PARTITION,
    RngStream,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix ``X`` (n, d) and integer labels ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.ndim != 1 or len(self.X) != len(self.y):
            raise ValueError("X must be (n, d) and y must be (n,)")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes)

    def label_counts(self, indices=None) -> np.ndarray:
        y = self.y if indices is None else self.y[np.asarray(indices, dtype=np.int64)]
        return np.bincount(y, minlength=self.num_classes)


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int = 10
    alpha: float = 0.01
    seed: int = 0
    min_batches: int = 2
    batch_size: int = 128

    @property
    def min_size(self) -> int:
        return self.min_batches * self.batch_size


@dataclass
class ClientPartition:
    indices: list
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.indices = [np.asarray(ix, dtype=np.int64) for ix in self.indices]
        sizes = np.array([len(ix) for ix in self.indices], dtype=np.float64)
        total = sizes.sum()
        if total == 0:
            raise PartitionError("partition assigns no samples")
        self.weights = sizes / total

    @property
    def num_clients(self) -> int:
        return len(self.indices)

    @property
    def sizes(self) -> list:
        return [len(ix) for ix in self.indices]


def make_synthetic(num_classes, dim, samples_per_class, separation, seed, center_seed=None):
    """Gaussian blobs with unit isotropic noise.

    Class ``k`` is centred at ``separation * u_k`` where ``u_k`` is a random
    unit vector drawn from ``center_seed`` (defaults to ``seed``). Pass the
    same ``center_seed`` with a different ``seed`` to draw a test set from
    the same distribution.
    """
    if min(num_classes, dim, samples_per_class) <= 0 or separation < 0:
        raise ValueError("arguments must be positive")
    center_seed = seed if center_seed is None else center_seed
    crng = RngStream(center_seed, (STREAM_DATA_CENTERS,)).generator()
    dirs = crng.standard_normal((num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = separation * dirs

    nrng = RngStream(seed, (STREAM_DATA_NOISE,)).generator()
    y = np.repeat(np.arange(num_classes), samples_per_class)
    X = centers[y] + nrng.standard_normal((len(y), dim))
    return Dataset(X, y, num_classes)


def _read_header(buf, path, magic_expected, ndims):
    header_len = 4 + 4 * ndims
    if len(buf) < 4:
        raise FormatError(f"{path}: file too short for magic number", offset=len(buf))
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic != magic_expected:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{magic_expected:08x}", offset=0)
    if len(buf) < header_len:
        raise FormatError(f"{path}: truncated header", offset=len(buf))
    dims = struct.unpack_from(f">{ndims}I", buf, 4)
    expected = header_len + math.prod(dims)
    if len(buf) < expected:
        raise FormatError(f"{path}: truncated data, expected {expected} bytes", offset=len(buf))
    return dims, header_len


def load_idx(images_path, labels_path, num_classes=10) -> Dataset:
    """Load an IDX image/label file pair (MNIST layout) with pixels scaled to [0, 1]."""
    ibuf = Path(images_path).read_bytes()
    lbuf = Path(labels_path).read_bytes()
    (count, rows, cols), ioff = _read_header(ibuf, images_path, IDX_IMAGES_MAGIC, 3)
    (lcount,), loff = _read_header(lbuf, labels_path, IDX_LABELS_MAGIC, 1)
    if lcount != count:
        raise FormatError(f"{labels_path}: {lcount} labels for {count} images", offset=4)
    pixels = np.frombuffer(ibuf, dtype=np.uint8, count=count * rows * cols, offset=ioff)
    labels = np.frombuffer(lbuf, dtype=np.uint8, count=count, offset=loff)
    if count and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise FormatError(f"{labels_path}: label {labels[bad]} out of range", offset=loff + bad)
    X = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), num_classes)


def dirichlet_partition(ds: Dataset, spec: PartitionSpec) -> ClientPartition:
    """Split ``ds`` across clients with Dirichlet(alpha) label skew.

    For each class a proportion vector over clients is drawn from
    Dirichlet(alpha, ..., alpha) and that class's samples are dealt out
    accordingly. Clients below ``min_batches * batch_size`` samples are then
    topped up with randomly chosen samples taken from the currently largest
    client, so the total count is preserved.
    """
    n_clients = spec.num_clients
    if n_clients < 1:
        raise PartitionError("num_clients must be positive")
    if not spec.alpha > 0:
        raise PartitionError("alpha must be positive")
    need = spec.min_size
    if n_clients * need > len(ds):
        raise PartitionError(
            f"{len(ds)} samples cannot give {n_clients} clients {need} samples each"
        )
    if n_clients == 1:
        return ClientPartition([np.arange(len(ds))])

    rng = RngStream(spec.seed, (STREAM_PARTITION,)).generator()
    buckets = [[] for _ in range(n_clients)]
    for k in range(ds.num_classes):
        members = np.flatnonzero(ds.y == k)
        if len(members) == 0:
            continue
        members = rng.permutation(members)
        props = rng.dirichlet(np.full(n_clients, spec.alpha))
        cuts = (np.cumsum(props)[:-1] * len(members)).astype(np.int64)
        for i, chunk in enumerate(np.split(members, cuts)):
            buckets[i].extend(chunk.tolist())

    while True:
        sizes = [len(b) for b in buckets]
        deficit = [i for i in range(n_clients) if sizes[i] < need]
        if not deficit:
            break
        i = deficit[0]
        donor = max(range(n_clients), key=lambda j: (sizes[j], -j))
        spare = sizes[donor] - need
        if spare <= 0:
            raise PartitionError("cannot satisfy the minimum client size")
        moved = min(need - sizes[i], spare)
        pick = rng.choice(sizes[donor], size=moved, replace=False)
        pick_set = set(pick.tolist())
        donor_items = buckets[donor]
        buckets[i].extend(donor_items[p] for p in sorted(pick_set))
        buckets[donor] = [v for p, v in enumerate(donor_items) if p not in pick_set]

    return ClientPartition([np.sort(np.array(b, dtype=np.int64)) for b in buckets])


def iid_partition(ds: Dataset, num_clients: int, seed: int) -> ClientPartition:
    rng = RngStream(seed, (STREAM_PARTITION,)).generator()
    perm = rng.permutation(len(ds))
    return ClientPartition([np.sort(c) for c in np.array_split(perm, num_clients)])


def epoch_batches(part: ClientPartition, client: int, batch_size: int, rng: RngStream) -> list:
    """Shuffle one client's indices and cut them into mini-batches.

    The returned list is the batch permutation for one local epoch; its length
    is the number of local steps. The last batch may be short.
    """
    if not 0 <= client < part.num_clients:
        raise IndexError(f"client {client} out of range")
    idx = part.indices[client]
    order = rng.generator().permutation(idx)
    return [order[s:s + batch_size] for s in range(0, len(order), batch_size)]


def batch_stream(seed: int, client: int) -> RngStream:
    """Client's shuffling stream; take ``.child(round)`` for one epoch."""
    return RngStream(seed, (STREAM_BATCHES, client))


def label_entropy(counts) -> float:
    """Shannon entropy (nats) of a label histogram."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())
