"""Datasets, partitioners and per-node batch streams."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, ConfigError, CountMismatchError, TruncatedFileError,
                     UsageError)
from .model import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int = 10
    source: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise UsageError(
                f"inputs {self.inputs.shape} and labels {self.labels.shape} do not line up")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise UsageError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices, source: str | None = None) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[indices], self.labels[indices], self.num_classes,
                              self.source if source is None else source)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# -- IDX ----------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_header(raw: bytes, magic: int, n_dims: int, path) -> tuple[int, ...]:
    size = 4 * (1 + n_dims)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < size:
        raise TruncatedFileError(f"{path}: header needs {size} bytes, file has {len(raw)}")
    return struct.unpack(f">{n_dims}I", raw[4:size])


def read_idx_images(path) -> np.ndarray:
    """uint8 array of shape (count, rows, cols)."""
    raw = _read_bytes(path)
    count, rows, cols = _parse_header(raw, IDX_IMAGES_MAGIC, 3, path)
    need = count * rows * cols
    body = raw[16:]
    if len(body) < need:
        raise TruncatedFileError(f"{path}: expected {need} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=need).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _parse_header(raw, IDX_LABELS_MAGIC, 1, path)
    body = raw[8:]
    if len(body) < count:
        raise TruncatedFileError(f"{path}: expected {count} label bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=count)


def load_idx(images_path, labels_path, num_classes: int = 10) -> LabeledDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path} holds {images.shape[0]} images but {labels_path} "
            f"holds {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(inputs, labels.astype(np.int64), num_classes, str(images_path))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (count, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# -- synthetic ----------------------------------------------------------------

def make_synthetic(num_classes: int, samples_per_class: int, input_dim: int, seed: int,
                   *, stream: int = 0, separation: float = 1.0,
                   noise: float = 0.25) -> LabeledDataset:
    """Gaussian clusters, one per class, clipped to [0, 1].

    Cluster centres depend only on ``seed``; ``stream`` selects an independent
    draw of samples around the same centres, so train/validation/test sets
    come from one distribution. Centres sit at ``0.5 + separation * u_c`` for
    random unit vectors ``u_c`` (near-orthogonal in high dimension), so
    ``separation`` is a Euclidean distance and ``noise`` a per-feature std.
    """
    if min(num_classes, samples_per_class, input_dim) < 1:
        raise ConfigError("num_classes, samples_per_class and input_dim must be positive")
    centre_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A55]))
    dirs = centre_rng.standard_normal((num_classes, input_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centres = 0.5 + separation * dirs
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A3B1E, stream]))
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    inputs = centres[labels] + noise * rng.standard_normal((labels.shape[0], input_dim))
    order = rng.permutation(labels.shape[0])
    return LabeledDataset(np.clip(inputs[order], 0.0, 1.0), labels[order], num_classes,
                          f"synthetic(seed={seed},stream={stream})")


# -- partitioning -------------------------------------------------------------

def split_equal(ds: LabeledDataset, num_nodes: int, seed: int) -> list[LabeledDataset]:
    """Random permutation cut into ``num_nodes`` shards whose sizes differ by at most one."""
    if num_nodes < 1:
        raise UsageError("num_nodes must be at least 1")
    if num_nodes > len(ds):
        raise UsageError(f"cannot split {len(ds)} samples over {num_nodes} nodes")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return [ds.subset(part, f"{ds.source}[shard {i}/{num_nodes}]")
            for i, part in enumerate(np.array_split(perm, num_nodes))]


@dataclass(frozen=True)
class MixSpec:
    r_m: int
    num_nodes: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.r_m <= 100:
            raise ConfigError(f"mix rate must be in [0, 100], got {self.r_m}")
        if self.num_nodes < 2:
            raise ConfigError("a biased split needs at least two nodes")


def biased_split_indices(labels: np.ndarray, spec: MixSpec, num_classes: int) -> list[np.ndarray]:
    """Index lists for :func:`split_biased`.

    Shard ``i`` is home to class ``i``. For each class, ceil((100-r_m)% of
    count) samples stay home and the floor remainder is dealt round-robin to
    the other shards, starting from a seeded random offset after a seeded
    shuffle within the class.
    """
    if spec.num_nodes != num_classes:
        raise UsageError(f"biased split needs one node per class "
                         f"({num_classes} classes, {spec.num_nodes} nodes)")
    rng = np.random.default_rng(spec.seed)
    shards: list[list[np.ndarray]] = [[] for _ in range(spec.num_nodes)]
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise UsageError(f"class {c} is absent from the dataset")
        members = rng.permutation(members)
        keep = -(-(100 - spec.r_m) * members.size // 100)
        shards[c].append(members[:keep])
        exported = members[keep:]
        others = np.array([j for j in range(spec.num_nodes) if j != c])
        offset = int(rng.integers(others.size))
        dest = others[(offset + np.arange(exported.size)) % others.size]
        for j in others:
            shards[j].append(exported[dest == j])
    return [np.concatenate(parts) for parts in shards]


def split_biased(ds: LabeledDataset, spec: MixSpec) -> list[LabeledDataset]:
    parts = biased_split_indices(ds.labels, spec, ds.num_classes)
    return [ds.subset(idx, f"{ds.source}[biased r_m={spec.r_m} shard {i}]")
            for i, idx in enumerate(parts)]


# -- batches ------------------------------------------------------------------

class BatchStream:
    """Shuffled-epoch batch service for one node.

    Each pass over the shard starts with a fresh shuffle; batches are then
    taken sequentially and the last one of a pass may be short.
    """

    def __init__(self, ds: LabeledDataset, batch_size: int, rng: np.random.Generator):
        if len(ds) == 0:
            raise UsageError("cannot draw batches from an empty dataset")
        if batch_size < 1:
            raise ConfigError("batch_size must be positive")
        self.ds = ds
        self.batch_size = batch_size
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    @property
    def batches_per_pass(self) -> int:
        return -(-len(self.ds) // self.batch_size)

    def next_batch(self) -> Batch:
        if self._pos >= self._order.size:
            self._order = self.rng.permutation(len(self.ds))
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += idx.size
        return Batch(self.ds.inputs[idx], self.ds.labels[idx])


def get_batch(stream: BatchStream) -> Batch:
    return stream.next_batch()
