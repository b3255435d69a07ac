"""Hypersphere metric learning around a nearest-negative proxy hinge loss.

The public surface re-exports the pieces most callers need; the submodules
(`geometry`, `losses`, `model`, `data`, `training`, `evaluation`,
`diagnostics`, `gradcheck`, `backends`, `cli`) stay importable directly for
everything else.
"""

from . import backends
from .data import Dataset, SyntheticSpec, batches, gen_synthetic, load_idx_pair, split
from .diagnostics import DiagReport, diagnose
from .errors import NptMetricError
from .evaluation import (
    EvalReport,
    embed_all,
    rank1_identification,
    verification_roc,
)
from .geometry import (
    HypersphereVector,
    cosine_similarity,
    euclidean_distance,
    normalize_to_sphere,
    sphere_distance,
)
from .gradcheck import check_loss_gradients
from .losses import (
    LabeledBatch,
    LossKind,
    LossResult,
    MarginConfig,
    ProxyBank,
    loss_dispatch,
    nearest_negative_proxy,
)
from .model import EmbedderModel, OptimizerState, init_model, model_backward, model_forward, sgd_step
from .training import EpochLog, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DiagReport",
    "EmbedderModel",
    "EpochLog",
    "EvalReport",
    "HypersphereVector",
    "LabeledBatch",
    "LossKind",
    "LossResult",
    "MarginConfig",
    "NptMetricError",
    "OptimizerState",
    "ProxyBank",
    "SyntheticSpec",
    "TrainConfig",
    "backends",
    "batches",
    "check_loss_gradients",
    "cosine_similarity",
    "diagnose",
    "embed_all",
    "euclidean_distance",
    "gen_synthetic",
    "init_model",
    "load_checkpoint",
    "load_idx_pair",
    "loss_dispatch",
    "model_backward",
    "model_forward",
    "nearest_negative_proxy",
    "normalize_to_sphere",
    "rank1_identification",
    "save_checkpoint",
    "sgd_step",
    "sphere_distance",
    "split",
    "train",
    "verification_roc",
]
