"""Hypersphere losses over a shared proxy bank.

Five losses, each with an explicit forward and an analytic backward:

* ``npt``            -- hinge on (distance to own proxy) minus (distance to the
                        nearest negative proxy) plus a margin; the nearest
                        negative is re-selected per sample, which is what gives
                        the loss its implicit hard-negative mining.
* ``proxy_triplet``  -- the same hinge summed over every negative proxy.
* ``triplet``        -- classic in-batch triplet with hard positive/negative
                        mining inside the batch; no proxies involved.
* ``norm_softmax``   -- cross-entropy over scaled cosine logits.
* ``margin_softmax`` -- norm_softmax with an additive angular margin on the
                        true-class logit.

Features and proxies are stored raw and normalized onto the radius-r sphere
on every read; gradients flow through that normalization, so no projection
step is needed after optimizer updates. Selection argmins are treated as
constants under differentiation, and exact selection ties break toward the
smallest index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .errors import (
    DimensionMismatch,
    InvariantViolation,
    NoValidTriplet,
    SingleClassError,
)
from .geometry import (
    ZERO_NORM,
    HypersphereVector,
    normalization_jacobian_apply,
    normalize_rows,
)


class LossKind(str, enum.Enum):
    NPT = "npt"
    PROXY_TRIPLET = "proxy_triplet"
    TRIPLET = "triplet"
    NORM_SOFTMAX = "norm_softmax"
    MARGIN_SOFTMAX = "margin_softmax"


@dataclass
class ProxyBank:
    """One learnable weight row per class, read in radius-r normalized form."""

    raw_weights: np.ndarray
    radius: float

    def __post_init__(self):
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64)
        self.radius = float(self.radius)
        if self.raw_weights.ndim != 2 or self.raw_weights.shape[0] < 2:
            raise InvariantViolation(
                f"proxy bank needs a (C>=2, n) matrix, got {self.raw_weights.shape}"
            )
        if not self.radius > 0.0:
            raise InvariantViolation("proxy bank radius must be positive")
        norms = np.linalg.norm(self.raw_weights, axis=1)
        if (norms <= ZERO_NORM).any():
            bad = int(np.argmax(norms <= ZERO_NORM))
            raise InvariantViolation(f"proxy row {bad} has (near-)zero norm")

    @property
    def class_count(self) -> int:
        return self.raw_weights.shape[0]

    @property
    def dim(self) -> int:
        return self.raw_weights.shape[1]

    def normalized(self) -> np.ndarray:
        """The radius-r view of the bank: rows r * w / ||w||."""
        return normalize_rows(self.raw_weights, self.radius)


def random_bank(class_count: int, dim: int, radius: float, rng: np.random.Generator) -> ProxyBank:
    """Standard-normal rows scaled onto the radius-r sphere."""
    rows = rng.standard_normal((class_count, dim))
    return ProxyBank(raw_weights=normalize_rows(rows, radius), radius=radius)


@dataclass
class LabeledBatch:
    """Raw (pre-normalization) network outputs with their class labels."""

    raw_features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.raw_features = np.asarray(self.raw_features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.raw_features.ndim != 2 or self.raw_features.shape[0] < 1:
            raise InvariantViolation(
                f"batch needs a (B>=1, n) feature matrix, got {self.raw_features.shape}"
            )
        if self.labels.shape != (self.raw_features.shape[0],):
            raise InvariantViolation("labels must be one int per batch row")

    def __len__(self) -> int:
        return self.raw_features.shape[0]


@dataclass
class MarginConfig:
    """Hinge margin plus the softmax-baseline knobs.

    ``scale`` and ``angular_margin`` only matter for the softmax losses;
    defaults are toy-scale implementation choices (a large scale overflows
    the soft targets at n=8).
    """

    delta: float = 0.5
    scale: float = 16.0
    angular_margin: float = 0.5

    def __post_init__(self):
        if self.delta < 0.0:
            raise InvariantViolation("margin delta must be nonnegative")
        if not self.scale > 0.0:
            raise InvariantViolation("softmax scale must be positive")
        if self.angular_margin < 0.0:
            raise InvariantViolation("angular margin must be nonnegative")


def default_margin(radius: float) -> MarginConfig:
    """The hyper-parameter-free default: delta = r^2 / 2."""
    return MarginConfig(delta=0.5 * radius * radius)


@dataclass
class LossResult:
    """Batch-mean loss with gradients w.r.t. raw features and touched proxies.

    ``grad_*`` fields are None on forward-only evaluation. ``grad_proxies``
    maps proxy row index -> gradient vector and only carries rows the loss
    actually touched. ``touched_negatives[i]`` is the nearest negative proxy
    for sample i when its hinge is active and -1 otherwise; the in-batch
    triplet loss stores the hard negative's *label* there (it has no
    proxies), and the softmax losses always store -1 (no hinge).
    """

    loss: float
    grad_raw_features: Optional[np.ndarray] = None
    grad_proxies: Optional[dict] = None
    touched_negatives: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def _validate(batch: LabeledBatch, bank: ProxyBank):
    if batch.raw_features.shape[1] != bank.dim:
        raise DimensionMismatch(
            f"feature dim {batch.raw_features.shape[1]} vs proxy dim {bank.dim}"
        )
    if (batch.labels < 0).any() or (batch.labels >= bank.class_count).any():
        raise InvariantViolation("batch labels outside [0, C)")


def cfg_delta_cap(radius: float) -> float:
    """Largest margin at which the hinge can ever be inactive: 4 r^2."""
    return 4.0 * radius * radius


def _check_margin(cfg: MarginConfig, bank: ProxyBank):
    if cfg.delta > cfg_delta_cap(bank.radius):
        raise InvariantViolation(
            f"delta {cfg.delta} exceeds 4 r^2 = {cfg_delta_cap(bank.radius)}; "
            "the hinge would never be inactive"
        )


def _prepare(batch: LabeledBatch, bank: ProxyBank):
    """Normalize features and proxies, return the shared intermediates."""
    _validate(batch, bank)
    r = bank.radius
    z = normalize_rows(batch.raw_features, r)
    w = bank.normalized()
    dots = z @ w.T
    return z, w, dots


def _sparse_proxy_grads(bank: ProxyBank, grad_w: np.ndarray, touched_rows: np.ndarray) -> dict:
    """Chain normalized-space proxy gradients back to raw rows, sparsely."""
    touched_rows = np.unique(touched_rows)
    if touched_rows.size == 0:
        return {}
    raw = bank.raw_weights[touched_rows]
    grads = normalization_jacobian_apply(raw, grad_w[touched_rows], bank.radius)
    return {int(j): grads[i] for i, j in enumerate(touched_rows)}


def nearest_negative_proxy(z: HypersphereVector, label: int, bank: ProxyBank):
    """Index and squared distance of the closest proxy of any other class.

    Ties break toward the smallest proxy index.
    """
    if bank.class_count < 2:
        raise SingleClassError("need at least 2 classes for a negative proxy")
    if z.dim != bank.dim:
        raise DimensionMismatch(f"vector dim {z.dim} vs proxy dim {bank.dim}")
    if not 0 <= label < bank.class_count:
        raise InvariantViolation(f"label {label} outside [0, {bank.class_count})")
    w = bank.normalized()
    dots = (z.components @ w.T)[None, :]
    idx, best = backends.kernels().nearest_negative(
        np.ascontiguousarray(dots), np.asarray([label], dtype=np.int64)
    )
    r = bank.radius
    dist = 2.0 * r * r - 2.0 * float(best[0])
    return int(idx[0]), dist


def _npt_eval(batch, bank, cfg, want_grads, update_negative_proxies=True):
    _check_margin(cfg, bank)
    z, w, dots = _prepare(batch, bank)
    b = len(batch)
    rows = np.arange(b)
    own = dots[rows, batch.labels]
    nidx, ndot = backends.kernels().nearest_negative(dots, batch.labels)
    # d(z, W_y) - d(z, W_n) + delta collapses to 2 (z.W_n - z.W_y) + delta
    args = 2.0 * (ndot - own) + cfg.delta
    active = args > 0.0
    loss = float(np.maximum(args, 0.0).mean())
    touched = np.where(active, nidx, -1)
    if not want_grads:
        return LossResult(loss=loss, touched_negatives=touched)

    gz = np.zeros_like(z)
    gw = np.zeros_like(w)
    if active.any():
        act = np.flatnonzero(active)
        gz[act] = (2.0 / b) * (w[nidx[act]] - w[batch.labels[act]])
        np.add.at(gw, batch.labels[act], (-2.0 / b) * z[act])
        touched_rows = [batch.labels[act]]
        if update_negative_proxies:
            np.add.at(gw, nidx[act], (2.0 / b) * z[act])
            touched_rows.append(nidx[act])
        touched_rows = np.concatenate(touched_rows)
    else:
        touched_rows = np.empty(0, dtype=np.int64)

    grad_raw = normalization_jacobian_apply(batch.raw_features, gz, bank.radius)
    grad_proxies = _sparse_proxy_grads(bank, gw, touched_rows)
    return LossResult(loss, grad_raw, grad_proxies, touched)


def npt_forward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    """Batch-mean nearest-negative proxy hinge loss (no gradients)."""
    return _npt_eval(batch, bank, cfg, want_grads=False)


def npt_backward(
    batch: LabeledBatch,
    bank: ProxyBank,
    cfg: MarginConfig,
    update_negative_proxies: bool = True,
) -> LossResult:
    """Loss plus gradients w.r.t. raw features and the touched proxy rows.

    The nearest-negative selection is held constant under differentiation;
    samples with an inactive hinge contribute exactly zero gradient.
    ``update_negative_proxies=False`` drops the gradient term on the negative
    proxy row (sensitivity toggle; the default pushes the negative away).
    """
    return _npt_eval(
        batch, bank, cfg, want_grads=True, update_negative_proxies=update_negative_proxies
    )


def _proxy_triplet_eval(batch, bank, cfg, want_grads, update_negative_proxies=True):
    _check_margin(cfg, bank)
    if bank.class_count < 2:
        raise SingleClassError("proxy triplet needs at least 2 classes")
    z, w, dots = _prepare(batch, bank)
    b = len(batch)
    rows = np.arange(b)
    own = dots[rows, batch.labels]
    args = 2.0 * (dots - own[:, None]) + cfg.delta
    neg_mask = np.ones_like(args, dtype=bool)
    neg_mask[rows, batch.labels] = False
    active = (args > 0.0) & neg_mask
    loss = float(np.where(active, args, 0.0).sum(axis=1).mean())

    # the nearest negative always has the largest hinge argument, so it is
    # active exactly when any pair is
    nidx, _ = backends.kernels().nearest_negative(dots, batch.labels)
    touched = np.where(active.any(axis=1), nidx, -1)
    if not want_grads:
        return LossResult(loss=loss, touched_negatives=touched)

    counts = active.sum(axis=1).astype(np.float64)
    a = active.astype(np.float64)
    gz = (2.0 / b) * (a @ w - counts[:, None] * w[batch.labels])
    gw = np.zeros_like(w)
    if update_negative_proxies:
        gw += (2.0 / b) * (a.T @ z)
    np.add.at(gw, batch.labels, (-2.0 / b) * counts[:, None] * z)

    touched_rows = [batch.labels[counts > 0]]
    if update_negative_proxies:
        touched_rows.append(np.flatnonzero(active.any(axis=0)))
    touched_rows = np.concatenate(touched_rows) if touched_rows else np.empty(0, np.int64)

    grad_raw = normalization_jacobian_apply(batch.raw_features, gz, bank.radius)
    grad_proxies = _sparse_proxy_grads(bank, gw, touched_rows)
    return LossResult(loss, grad_raw, grad_proxies, touched)


def proxy_triplet_forward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    """Hinge summed over every negative proxy, batch-meaned (no gradients)."""
    return _proxy_triplet_eval(batch, bank, cfg, want_grads=False)


def proxy_triplet_backward(
    batch: LabeledBatch,
    bank: ProxyBank,
    cfg: MarginConfig,
    update_negative_proxies: bool = True,
) -> LossResult:
    """Loss plus gradients; every negative with an active hinge gets one."""
    return _proxy_triplet_eval(
        batch, bank, cfg, want_grads=True, update_negative_proxies=update_negative_proxies
    )


def _triplet_eval(batch, radius, cfg, want_grads):
    if cfg.delta > 4.0 * radius * radius:
        raise InvariantViolation("delta exceeds 4 r^2; the hinge would never be inactive")
    z = normalize_rows(batch.raw_features, radius)
    dots = z @ z.T
    pos, neg = backends.kernels().hard_pos_neg(np.ascontiguousarray(dots), batch.labels)
    valid = (pos >= 0) & (neg >= 0)
    if not valid.any():
        raise NoValidTriplet("no anchor has both an in-batch positive and negative")
    m = int(valid.sum())
    rows = np.arange(len(batch))
    args = np.zeros(len(batch))
    v = np.flatnonzero(valid)
    args[v] = 2.0 * (dots[v, neg[v]] - dots[v, pos[v]]) + cfg.delta
    active = valid & (args > 0.0)
    loss = float(np.maximum(args[v], 0.0).mean())
    touched = np.where(active, batch.labels[np.where(active, neg, 0)], -1)
    if not want_grads:
        return LossResult(loss=loss, touched_negatives=touched)

    gz = np.zeros_like(z)
    act = np.flatnonzero(active)
    if act.size:
        np.add.at(gz, act, (2.0 / m) * (z[neg[act]] - z[pos[act]]))
        np.add.at(gz, pos[act], (-2.0 / m) * z[act])
        np.add.at(gz, neg[act], (2.0 / m) * z[act])
    grad_raw = normalization_jacobian_apply(batch.raw_features, gz, radius)
    return LossResult(loss, grad_raw, {}, touched)


def triplet_forward_inbatch(batch: LabeledBatch, cfg: MarginConfig, radius: float = 1.0) -> LossResult:
    """In-batch triplet loss with hard positive/negative mining.

    Per anchor, the hard positive is the farthest same-label sample and the
    hard negative the closest different-label sample; anchors missing either
    are skipped and the loss is the mean over the anchors that qualify.
    """
    return _triplet_eval(batch, radius, cfg, want_grads=False)


def triplet_backward_inbatch(batch: LabeledBatch, cfg: MarginConfig, radius: float = 1.0) -> LossResult:
    """In-batch triplet loss plus gradients w.r.t. raw features."""
    return _triplet_eval(batch, radius, cfg, want_grads=True)


def _softmax_core(batch, bank, cfg, want_grads, target_logit_fn=None):
    """Shared cross-entropy machinery over scaled cosine logits.

    ``target_logit_fn(cos_y) -> (phi, dphi_dcos)`` rewrites the true-class
    logit; None means plain normalized softmax.
    """
    z, w, dots = _prepare(batch, bank)
    r2 = bank.radius * bank.radius
    b = len(batch)
    rows = np.arange(b)
    raw_cos = dots / r2
    inside = np.abs(raw_cos) <= 1.0
    cos = np.clip(raw_cos, -1.0, 1.0)

    logits = cfg.scale * cos
    if target_logit_fn is not None:
        phi, dphi = target_logit_fn(cos[rows, batch.labels])
        logits = logits.copy()
        logits[rows, batch.labels] = cfg.scale * phi
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    denom = expv.sum(axis=1)
    log_probs = shifted - np.log(denom)[:, None]
    loss = float(-log_probs[rows, batch.labels].mean())
    touched = np.full(b, -1, dtype=np.int64)
    if not want_grads:
        return LossResult(loss=loss, touched_negatives=touched)

    probs = expv / denom[:, None]
    dlogits = probs.copy()
    dlogits[rows, batch.labels] -= 1.0
    dlogits /= b
    dcos = cfg.scale * dlogits
    if target_logit_fn is not None:
        dcos[rows, batch.labels] *= dphi
    dcos = np.where(inside, dcos, 0.0)

    gz = (dcos @ w) / r2
    gw = (dcos.T @ z) / r2
    grad_raw = normalization_jacobian_apply(batch.raw_features, gz, bank.radius)
    grad_proxies = _sparse_proxy_grads(bank, gw, np.arange(bank.class_count))
    return LossResult(loss, grad_raw, grad_proxies, touched)


def normalized_softmax_forward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    """Cross-entropy over logits scale * cos(z, W_j), batch-meaned."""
    return _softmax_core(batch, bank, cfg, want_grads=False)


def normalized_softmax_backward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    return _softmax_core(batch, bank, cfg, want_grads=True)


def _angular_target(m: float):
    if m == 0.0:
        # bit-exact reduction to the plain normalized softmax
        return lambda cos_y: (cos_y, np.ones_like(cos_y))

    def fn(cos_y):
        theta = np.arccos(cos_y)
        shifted = theta + m
        clamped = shifted >= np.pi
        phi = np.where(clamped, -1.0, np.cos(np.minimum(shifted, np.pi)))
        sin_t = np.sqrt(np.clip(1.0 - cos_y * cos_y, 0.0, None))
        safe = (~clamped) & (sin_t > 1e-12)
        dphi = np.where(safe, np.sin(np.minimum(shifted, np.pi)) / np.where(sin_t > 1e-12, sin_t, 1.0), 0.0)
        return phi, dphi

    return fn


def margin_softmax_forward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    """Additive angular margin on the true-class logit: scale * cos(theta + m).

    The shifted angle is clamped to pi so near-antipodal features stay finite.
    """
    return _softmax_core(batch, bank, cfg, want_grads=False, target_logit_fn=_angular_target(cfg.angular_margin))


def margin_softmax_backward(batch: LabeledBatch, bank: ProxyBank, cfg: MarginConfig) -> LossResult:
    return _softmax_core(batch, bank, cfg, want_grads=True, target_logit_fn=_angular_target(cfg.angular_margin))


_FORWARD = {
    LossKind.NPT: npt_forward,
    LossKind.PROXY_TRIPLET: proxy_triplet_forward,
    LossKind.NORM_SOFTMAX: normalized_softmax_forward,
    LossKind.MARGIN_SOFTMAX: margin_softmax_forward,
}


def loss_forward(kind, batch, bank, cfg) -> LossResult:
    """Forward-only dispatch; see loss_dispatch for the gradient path."""
    kind = LossKind(kind)
    if kind is LossKind.TRIPLET:
        radius = bank.radius if bank is not None else 1.0
        return triplet_forward_inbatch(batch, cfg, radius)
    return _FORWARD[kind](batch, bank, cfg)


def loss_dispatch(kind, batch, bank, cfg, update_negative_proxies: bool = True) -> LossResult:
    """Route to the matching forward+backward pair; returns loss and gradients."""
    kind = LossKind(kind)
    if kind is LossKind.NPT:
        return npt_backward(batch, bank, cfg, update_negative_proxies)
    if kind is LossKind.PROXY_TRIPLET:
        return proxy_triplet_backward(batch, bank, cfg, update_negative_proxies)
    if kind is LossKind.TRIPLET:
        radius = bank.radius if bank is not None else 1.0
        return triplet_backward_inbatch(batch, cfg, radius)
    if kind is LossKind.NORM_SOFTMAX:
        return normalized_softmax_backward(batch, bank, cfg)
    return margin_softmax_backward(batch, bank, cfg)
