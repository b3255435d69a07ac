"""Datasets: synthetic sphere clusters, IDX image files, splits and batching.

Synthetic data lives on the unit sphere in input space: one seeded direction
per class, samples are direction-plus-gaussian-noise renormalized. IDX files
(the common small-image binary format: big-endian headers, ubyte payload)
are flattened row-major and scaled to [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    EmptyClassError,
    InvariantViolation,
    TruncatedFile,
    UnseparableSpec,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

REDRAW_COSINE_CAP = 0.95
REDRAW_ATTEMPTS = 100


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, d_in) float64
    labels: np.ndarray  # (N,) int64
    class_count: int
    name: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_count = int(self.class_count)
        if self.inputs.ndim != 2:
            raise InvariantViolation(f"inputs must be (N, d_in), got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise InvariantViolation("labels must be one int per row")
        if self.class_count < 1:
            raise InvariantViolation("class_count must be >= 1")
        if len(self) and ((self.labels < 0).any() or (self.labels >= self.class_count).any()):
            raise InvariantViolation("labels outside [0, class_count)")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def validate_full(self) -> "Dataset":
        """Enforce the training-grade invariants: N >= C, no empty class.

        Split test sides may legitimately be sparse, so this is a separate
        gate rather than part of construction.
        """
        if len(self) < self.class_count:
            raise InvariantViolation(
                f"{len(self)} samples cannot cover {self.class_count} classes"
            )
        present = np.bincount(self.labels, minlength=self.class_count)
        if (present == 0).any():
            missing = int(np.argmax(present == 0))
            raise EmptyClassError(f"class {missing} has no samples")
        return self

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass
class SyntheticSpec:
    class_count: int
    input_dim: int
    samples_per_class: int
    noise_sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise InvariantViolation("need at least 2 classes")
        if self.input_dim < 2:
            raise InvariantViolation("need input_dim >= 2")
        if self.samples_per_class < 1:
            raise InvariantViolation("need at least 1 sample per class")
        if self.noise_sigma < 0.0:
            raise InvariantViolation("noise_sigma must be nonnegative")


def _draw_directions(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit class directions with pairwise cosine capped at 0.95."""
    dirs = np.empty((spec.class_count, spec.input_dim))
    for c in range(spec.class_count):
        for attempt in range(REDRAW_ATTEMPTS + 1):
            v = rng.standard_normal(spec.input_dim)
            v /= np.linalg.norm(v)
            if c == 0 or (dirs[:c] @ v).max() <= REDRAW_COSINE_CAP:
                dirs[c] = v
                break
        else:
            raise UnseparableSpec(
                f"could not place class direction {c} with cosine <= "
                f"{REDRAW_COSINE_CAP} after {REDRAW_ATTEMPTS} redraws "
                f"(C={spec.class_count}, d={spec.input_dim})"
            )
    return dirs


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Seeded cluster dataset; sigma=0 reproduces each direction exactly."""
    rng = np.random.default_rng(spec.seed)
    dirs = _draw_directions(spec, rng)
    n = spec.class_count * spec.samples_per_class
    labels = np.repeat(np.arange(spec.class_count, dtype=np.int64), spec.samples_per_class)
    if spec.noise_sigma == 0.0:
        inputs = dirs[labels].copy()
    else:
        noisy = dirs[labels] + spec.noise_sigma * rng.standard_normal((n, spec.input_dim))
        inputs = noisy / np.linalg.norm(noisy, axis=1, keepdims=True)
    ds = Dataset(
        inputs=inputs,
        labels=labels,
        class_count=spec.class_count,
        name=f"synthetic-c{spec.class_count}-d{spec.input_dim}-s{spec.seed}",
    )
    return ds.validate_full()


def _read_exact(fh, count: int, path, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFile(f"{path}: expected {count} bytes of {what}, got {len(buf)}")
    return buf


def load_idx_pair(images_path, labels_path) -> Dataset:
    """Decode an images/labels IDX file pair into a flat float dataset.

    Pixels are scaled to [0, 1]; label values are remapped to a dense
    [0, C) range (sorted by original value) so downstream invariants hold
    even for label subsets.
    """
    with open(images_path, "rb") as fh:
        magic, n_img, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, images_path, "header"))
        if magic != IMAGES_MAGIC:
            raise BadMagic(f"{images_path}: magic {magic:#010x}, want {IMAGES_MAGIC:#010x}")
        raw = _read_exact(fh, n_img * rows * cols, images_path, "pixels")
    with open(labels_path, "rb") as fh:
        magic, n_lab = struct.unpack(">ii", _read_exact(fh, 8, labels_path, "header"))
        if magic != LABELS_MAGIC:
            raise BadMagic(f"{labels_path}: magic {magic:#010x}, want {LABELS_MAGIC:#010x}")
        raw_labels = _read_exact(fh, n_lab, labels_path, "labels")
    if n_img != n_lab:
        raise CountMismatch(f"{n_img} images vs {n_lab} labels")

    inputs = np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(n_img, rows * cols)
    inputs /= 255.0
    orig = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    uniq, labels = np.unique(orig, return_inverse=True)
    ds = Dataset(
        inputs=inputs,
        labels=labels.astype(np.int64),
        class_count=len(uniq),
        name=str(images_path),
    )
    return ds.validate_full()


def split(ds: Dataset, test_fraction: float, seed: int):
    """Stratified seeded split; per-class test count floors toward train."""
    if not 0.0 <= test_fraction <= 1.0:
        raise InvariantViolation(f"test_fraction {test_fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(ds.class_count):
        members = np.flatnonzero(ds.labels == c)
        n_test = int(np.floor(test_fraction * members.size))
        if members.size and n_test == members.size:
            raise EmptyClassError(f"class {c} would lose all {members.size} samples to test")
        perm = rng.permutation(members)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    train = Dataset(ds.inputs[train_idx], ds.labels[train_idx], ds.class_count, ds.name + "/train")
    test = Dataset(ds.inputs[test_idx], ds.labels[test_idx], ds.class_count, ds.name + "/test")
    return train, test


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int):
    """Seeded per-epoch shuffle (seed XOR epoch), final short batch kept."""
    if batch_size < 1:
        raise InvariantViolation("batch_size must be >= 1")
    rng = np.random.default_rng(seed ^ epoch)
    order = rng.permutation(len(ds))
    out = []
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        out.append((ds.inputs[idx], ds.labels[idx]))
    return out


def save_dataset_csv(ds: Dataset, path) -> None:
    """`label,x0,…,x{d−1}` rows; floats via repr so reload is lossless."""
    with open(path, "w") as fh:
        fh.write("label," + ",".join(f"x{i}" for i in range(ds.dim)) + "\n")
        for y, row in zip(ds.labels, ds.inputs):
            fh.write(f"{int(y)}," + ",".join(repr(float(v)) for v in row) + "\n")


def load_dataset_csv(path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "label":
            raise BadMagic(f"{path}: not a dataset CSV (header starts {header[:2]})")
        dim = len(header) - 1
        rows, labels = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != dim + 1:
                raise TruncatedFile(f"{path}: row with {len(parts)} fields, want {dim + 1}")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    labels = np.asarray(labels, dtype=np.int64)
    ds = Dataset(
        inputs=np.asarray(rows, dtype=np.float64).reshape(len(labels), dim),
        labels=labels,
        class_count=int(labels.max()) + 1 if len(labels) else 1,
        name=str(path),
    )
    return ds.validate_full()
