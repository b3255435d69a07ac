"""Training loop: batches -> embed -> loss -> backward -> SGD, plus checkpoints.

Determinism contract: everything except wallclock timing is a pure function
of (config, dataset). Model init, proxy init and per-epoch shuffles all
derive from config.seed.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, batches
from .errors import (
    BadMagic,
    CorruptTensor,
    InvariantViolation,
    NonFiniteLoss,
    VersionMismatch,
)
from .geometry import normalize_rows
from .losses import (
    LabeledBatch,
    LossKind,
    MarginConfig,
    ProxyBank,
    loss_dispatch,
    random_bank,
)
from .model import (
    EmbedderModel,
    OptimizerState,
    init_model,
    model_backward,
    model_forward,
    sgd_step,
)

CHECKPOINT_MAGIC = b"NPTC"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    loss_kind: LossKind = LossKind.NPT
    margin: MarginConfig = field(default_factory=MarginConfig)
    radius: float = 1.0
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_epochs: tuple = (20, 27)
    decay_factor: float = 0.1
    seed: int = 0
    log_every: int = 1
    checkpoint_path: Optional[str] = None
    hidden_dims: tuple = (64, 64)
    embed_dim: int = 8
    # sensitivity toggles (default on): push negatives' proxies away, and
    # apply the same weight decay to proxy rows as to model weights
    update_negative_proxies: bool = True
    proxy_weight_decay: bool = True
    # per-epoch nearest/second-nearest class distance tracking (slow-ish)
    track_dn_dk: bool = False

    def __post_init__(self):
        self.loss_kind = LossKind(self.loss_kind)
        if self.epochs < 1:
            raise InvariantViolation("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvariantViolation("batch_size must be >= 1")
        if not self.radius > 0.0:
            raise InvariantViolation("radius must be positive")
        if not self.lr > 0.0:
            raise InvariantViolation("lr must be positive")


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    min_pairwise_proxy_distance: float
    wallclock_seconds: float
    d_n: Optional[float] = None
    d_k: Optional[float] = None

    def __post_init__(self):
        if self.mean_loss < 0.0:
            raise InvariantViolation("mean_loss must be nonnegative")


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Stepwise decay: multiply by decay_factor at each decay epoch (1-based)."""
    hits = sum(1 for d in config.decay_epochs if epoch >= d)
    return config.lr * config.decay_factor**hits


def train(config: TrainConfig, dataset: Dataset):
    """Full run; returns (model, bank, per-epoch logs).

    Raises NonFiniteLoss (with epoch/batch coordinates) the moment a batch
    loss stops being finite — skipping bad batches would mask gradient bugs.
    """
    from .diagnostics import dn_dk, min_proxy_pair_distance  # one-way import

    dataset.validate_full()
    rng = np.random.default_rng(config.seed)
    model = init_model(dataset.dim, config.hidden_dims, config.embed_dim, rng)
    bank = random_bank(dataset.class_count, config.embed_dim, config.radius, rng)

    model_params = model.parameters()
    model_opt = OptimizerState.for_params(model_params)
    proxy_opt = OptimizerState.for_params([bank.raw_weights])
    proxy_wd = config.weight_decay if config.proxy_weight_decay else 0.0

    logs = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr = lr_at_epoch(config, epoch)
        loss_sum = 0.0
        seen = 0
        for batch_no, (x, y) in enumerate(batches(dataset, config.batch_size, config.seed, epoch)):
            raw, tape = model_forward(model, x)
            result = loss_dispatch(
                config.loss_kind,
                LabeledBatch(raw_features=raw, labels=y),
                bank,
                config.margin,
                update_negative_proxies=config.update_negative_proxies,
            )
            if not np.isfinite(result.loss):
                raise NonFiniteLoss(f"loss {result.loss} at epoch {epoch}, batch {batch_no}")
            grads = model_backward(model, tape, result.grad_raw_features)
            sgd_step(model_params, grads.parameters(), model_opt, lr,
                     config.momentum, config.weight_decay)

            proxy_grad = np.zeros_like(bank.raw_weights)
            for j, g in (result.grad_proxies or {}).items():
                proxy_grad[j] = g
            sgd_step([bank.raw_weights], [proxy_grad], proxy_opt, lr,
                     config.momentum, proxy_wd)

            loss_sum += result.loss * len(y)
            seen += len(y)

        entry = EpochLog(
            epoch=epoch,
            mean_loss=loss_sum / seen,
            min_pairwise_proxy_distance=min_proxy_pair_distance(bank),
            wallclock_seconds=time.perf_counter() - started,
        )
        if config.track_dn_dk and dataset.class_count >= 3:
            emb = embed_dataset(model, dataset, config.radius)
            entry.d_n, entry.d_k = dn_dk(emb, dataset.labels, bank)
        logs.append(entry)

    if config.checkpoint_path:
        save_checkpoint(model, bank, config.checkpoint_path)
    return model, bank, logs


def embed_dataset(model: EmbedderModel, dataset: Dataset, radius: float) -> np.ndarray:
    """(N, d_out) matrix of radius-r embeddings; row order = dataset order."""
    raw, _ = model_forward(model, dataset.inputs)
    return normalize_rows(raw, radius)


def epoch_log_csv(logs, path) -> None:
    """`epoch,mean_loss,min_proxy_dist,seconds` (+ d_n,d_k when tracked)."""
    tracked = any(e.d_n is not None for e in logs)
    with open(path, "w") as fh:
        header = "epoch,mean_loss,min_proxy_dist,seconds"
        fh.write(header + (",d_n,d_k" if tracked else "") + "\n")
        for e in logs:
            row = f"{e.epoch},{e.mean_loss!r},{e.min_pairwise_proxy_distance!r},{e.wallclock_seconds:.3f}"
            if tracked:
                row += f",{e.d_n!r},{e.d_k!r}" if e.d_n is not None else ",,"
            fh.write(row + "\n")


# --- checkpoint format -------------------------------------------------------
# magic "NPTC" | version u32 LE | tensors until EOF
# tensor: rank u32 LE | dims u32 LE each | float64 LE row-major values
# order: radius (rank 0), layer_dims (rank 1), then W,b per layer, proxy rows

_MAX_RANK = 8


def _write_tensor(fh, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(arr.astype("<f8").tobytes(order="C"))


def _read_tensor(fh, path) -> Optional[np.ndarray]:
    head = fh.read(4)
    if not head:
        return None  # clean EOF
    if len(head) != 4:
        raise CorruptTensor(f"{path}: dangling {len(head)}-byte tensor header")
    (rank,) = struct.unpack("<I", head)
    if rank > _MAX_RANK:
        raise CorruptTensor(f"{path}: implausible tensor rank {rank}")
    dims = []
    for _ in range(rank):
        buf = fh.read(4)
        if len(buf) != 4:
            raise CorruptTensor(f"{path}: truncated tensor dims")
        dims.append(struct.unpack("<I", buf)[0])
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise CorruptTensor(f"{path}: tensor payload {len(payload)} of {8 * count} bytes")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def save_checkpoint(model: EmbedderModel, bank: ProxyBank, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_tensor(fh, np.float64(bank.radius))
        _write_tensor(fh, np.asarray(model.layer_dims, dtype=np.float64))
        for w, b in zip(model.weights, model.biases):
            _write_tensor(fh, w)
            _write_tensor(fh, b)
        _write_tensor(fh, bank.raw_weights)


def load_checkpoint(path):
    """Inverse of save_checkpoint; round-trip is bit-exact."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"{path}: magic {magic!r}, want {CHECKPOINT_MAGIC!r}")
        vbuf = fh.read(4)
        if len(vbuf) != 4:
            raise CorruptTensor(f"{path}: missing version word")
        (version,) = struct.unpack("<I", vbuf)
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(f"{path}: version {version}, want {CHECKPOINT_VERSION}")

        tensors = []
        while True:
            t = _read_tensor(fh, path)
            if t is None:
                break
            tensors.append(t)

    if len(tensors) < 3:
        raise CorruptTensor(f"{path}: only {len(tensors)} tensors")
    radius = float(tensors[0])
    dims = [int(v) for v in tensors[1]]
    n_layers = len(dims) - 1
    expect = 2 + 2 * n_layers + 1
    if len(tensors) != expect:
        raise CorruptTensor(f"{path}: {len(tensors)} tensors, want {expect} for dims {dims}")
    weights, biases = [], []
    for i in range(n_layers):
        w = tensors[2 + 2 * i]
        b = tensors[3 + 2 * i]
        if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
            raise CorruptTensor(f"{path}: layer {i} tensor shapes {w.shape}/{b.shape}")
        weights.append(w)
        biases.append(b)
    model = EmbedderModel(weights=weights, biases=biases)
    bank = ProxyBank(raw_weights=tensors[-1], radius=radius)
    if bank.dim != dims[-1]:
        raise CorruptTensor(f"{path}: proxy dim {bank.dim} vs model output {dims[-1]}")
    return model, bank
