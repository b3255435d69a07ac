"""Post-hoc checks of the geometric claims behind the nearest-negative loss.

Everything here operates on a frozen snapshot: an (N, d) matrix of
embeddings already on the radius-r sphere, their labels, and the proxy bank.
The individual statistics:

* gamma_bar            -- mean over classes of ||class mean|| / r; close to 1
                          when classes are tightly clustered (assumption A1's
                          measurable surrogate).
* proxy_mean_cosine    -- mean cosine between each proxy and its class's
                          normalized feature mean (assumption A2's surrogate).
* D_n, D_k             -- mean true distance from samples to the class owning
                          their nearest / second-nearest negative proxy;
                          D_n < D_k is the prediction that proxy order tracks
                          sample order.
* property 1 check     -- samples with hinge loss below the margin must have
                          their own proxy as argmin; violations are counted
                          sample-exactly.
* property 2 check     -- proxies end up pairwise separated by at least the
                          margin minus the residual loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .errors import DegenerateMean, DimensionMismatch, TooFewClasses
from .geometry import ZERO_NORM, normalize_rows
from .losses import ProxyBank

MIN_SAMPLES_DEFAULT = 20


@dataclass
class ClassMeans:
    """Arithmetic per-class embedding means for classes with enough samples."""

    class_ids: np.ndarray  # (K,) int64, sorted
    means: np.ndarray  # (K, d)
    counts: np.ndarray  # (K,) int64
    excluded: list = field(default_factory=list)  # class ids under min_samples

    def row_for(self, class_id: int) -> Optional[int]:
        pos = np.searchsorted(self.class_ids, class_id)
        if pos < len(self.class_ids) and self.class_ids[pos] == class_id:
            return int(pos)
        return None


@dataclass
class DiagReport:
    gamma_bar: float
    mean_norm_variance: float
    proxy_mean_cosine: float
    D_n: float
    D_k: float
    min_proxy_pair_distance: float
    prop1_holds: bool
    prop2_condition_fraction: float
    property1_violations: int
    classes_used: int

    def rows(self):
        """Key-value pairs in a stable order for the CSV emitter."""
        return [
            ("gamma_bar", self.gamma_bar),
            ("mean_norm_variance", self.mean_norm_variance),
            ("proxy_mean_cosine", self.proxy_mean_cosine),
            ("D_n", self.D_n),
            ("D_k", self.D_k),
            ("min_proxy_pair_distance", self.min_proxy_pair_distance),
            ("prop1_holds", self.prop1_holds),
            ("prop2_condition_fraction", self.prop2_condition_fraction),
            ("property1_violations", self.property1_violations),
            ("classes_used", self.classes_used),
        ]


def class_means(embeddings: np.ndarray, labels: np.ndarray, min_samples: int = MIN_SAMPLES_DEFAULT) -> ClassMeans:
    """Per-class arithmetic means; classes under min_samples are excluded."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    ids, counts = np.unique(labels, return_counts=True)
    keep = counts >= min_samples
    means = np.stack(
        [embeddings[labels == c].mean(axis=0) for c in ids[keep]]
    ) if keep.any() else np.empty((0, embeddings.shape[1]))
    return ClassMeans(
        class_ids=ids[keep],
        means=means,
        counts=counts[keep],
        excluded=[int(c) for c in ids[~keep]],
    )


def gamma_and_variance(means: ClassMeans, radius: float):
    """(mean of ||m_i||/r, population variance of ||m_i||)."""
    if len(means.class_ids) == 0:
        raise DegenerateMean("no classes survived the min_samples filter")
    norms = np.linalg.norm(means.means, axis=1)
    return float((norms / radius).mean()), float(norms.var())


def proxy_mean_cosine(bank: ProxyBank, means: ClassMeans) -> float:
    """Mean cosine between each used class's proxy and its feature mean."""
    if len(means.class_ids) == 0:
        raise DegenerateMean("no classes survived the min_samples filter")
    if means.means.shape[1] != bank.dim:
        raise DimensionMismatch(f"means dim {means.means.shape[1]} vs bank {bank.dim}")
    norms = np.linalg.norm(means.means, axis=1)
    if (norms <= ZERO_NORM).any():
        bad = means.class_ids[int(np.argmax(norms <= ZERO_NORM))]
        raise DegenerateMean(f"class {bad} has a zero-norm mean")
    w = bank.normalized()[means.class_ids]
    cos = np.einsum("ij,ij->i", w, means.means) / (np.linalg.norm(w, axis=1) * norms)
    return float(np.clip(cos, -1.0, 1.0).mean())


def _two_nearest_negative_proxies(embeddings, labels, bank):
    dots = embeddings @ bank.normalized().T
    return backends.kernels().two_nearest_negatives(
        np.ascontiguousarray(dots), np.ascontiguousarray(labels, dtype=np.int64)
    )


def dn_dk(embeddings: np.ndarray, labels: np.ndarray, bank: ProxyBank):
    """(D_n, D_k): true sample-to-class distances for the two nearest
    negative-proxy classes, averaged over samples within a class and then
    over classes.

    The inner average uses the linearity of the squared sphere distance in
    the second argument: mean_x d(z, x) = 2r^2 - 2 z . mean(x).
    """
    if bank.class_count < 3:
        raise TooFewClasses(f"need >= 3 classes for a second-nearest, have {bank.class_count}")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    r2 = bank.radius * bank.radius
    nearest, second = _two_nearest_negative_proxies(embeddings, labels, bank)

    # full per-class sample means (every class with >= 1 sample participates
    # as a distance target, independent of any min_samples reporting filter)
    full = class_means(embeddings, labels, min_samples=1)
    target_mean = np.zeros((bank.class_count, embeddings.shape[1]))
    target_mean[full.class_ids] = full.means

    d_n = 2.0 * r2 - 2.0 * np.einsum("ij,ij->i", embeddings, target_mean[nearest])
    d_k = 2.0 * r2 - 2.0 * np.einsum("ij,ij->i", embeddings, target_mean[second])

    own_ids = np.unique(labels)
    per_class_n = [d_n[labels == c].mean() for c in own_ids]
    per_class_k = [d_k[labels == c].mean() for c in own_ids]
    return float(np.mean(per_class_n)), float(np.mean(per_class_k))


def check_prop2_condition(embeddings: np.ndarray, labels: np.ndarray, bank: ProxyBank,
                          means: ClassMeans) -> float:
    """Fraction of samples whose two nearest negative classes satisfy the
    sufficient condition  d_e(W_j, m~_j) + d_e(W_k, m~_k) < d_e(z, W_k) - d_e(z, W_j).

    Informational: the ordering conclusion can hold even where this fails.
    Samples whose nearest classes carry no usable mean count as unsatisfied.
    """
    if bank.class_count < 3:
        raise TooFewClasses(f"need >= 3 classes, have {bank.class_count}")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    nearest, second = _two_nearest_negative_proxies(embeddings, labels, bank)
    w = bank.normalized()
    r = bank.radius

    norms = np.linalg.norm(means.means, axis=1)
    if (norms <= ZERO_NORM).any():
        bad = means.class_ids[int(np.argmax(norms <= ZERO_NORM))]
        raise DegenerateMean(f"class {bad} has a zero-norm mean")
    tilde = normalize_rows(means.means, r) if len(means.class_ids) else means.means

    # euclidean proxy-to-normalized-mean gap per class, +inf where unusable
    gap = np.full(bank.class_count, np.inf)
    usable = means.class_ids
    gap[usable] = np.linalg.norm(w[usable] - tilde, axis=1)

    d_zj = np.linalg.norm(embeddings - w[nearest], axis=1)
    d_zk = np.linalg.norm(embeddings - w[second], axis=1)
    alpha = d_zk - d_zj
    satisfied = gap[nearest] + gap[second] < alpha
    return float(satisfied.mean())


def per_sample_npt_loss(embeddings: np.ndarray, labels: np.ndarray, bank: ProxyBank,
                        delta: float) -> np.ndarray:
    """Hinge value per sample (no batch mean), on already-normalized rows."""
    dots = embeddings @ bank.normalized().T
    rows = np.arange(len(labels))
    own = dots[rows, labels]
    _, ndot = backends.kernels().nearest_negative(
        np.ascontiguousarray(dots), np.ascontiguousarray(labels, dtype=np.int64)
    )
    return np.maximum(2.0 * (ndot - own) + delta, 0.0)


def min_proxy_pair_distance(bank: ProxyBank) -> float:
    """min over i<j of the squared sphere distance between normalized proxies."""
    w = bank.normalized()
    r2 = bank.radius * bank.radius
    dots = w @ w.T
    off = ~np.eye(bank.class_count, dtype=bool)
    return float((2.0 * r2 - 2.0 * dots[off]).min())


def check_properties(embeddings: np.ndarray, labels: np.ndarray, bank: ProxyBank,
                     delta: float):
    """(property1_violations, min_proxy_pair_distance).

    A violation is a sample with hinge loss < delta whose nearest proxy over
    *all* classes is not its own label — checked sample-exactly.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    losses = per_sample_npt_loss(embeddings, labels, bank, delta)
    dots = embeddings @ bank.normalized().T
    argmin_class = np.argmax(dots, axis=1)  # max dot == min distance
    violations = int(((losses < delta) & (argmin_class != labels)).sum())
    return violations, min_proxy_pair_distance(bank)


def diagnose(embeddings: np.ndarray, labels: np.ndarray, bank: ProxyBank, delta: float,
             min_samples: int = MIN_SAMPLES_DEFAULT) -> DiagReport:
    """Assemble the full report on one snapshot."""
    means = class_means(embeddings, labels, min_samples)
    gamma_bar, var = gamma_and_variance(means, bank.radius)
    pmc = proxy_mean_cosine(bank, means)
    d_n, d_k = dn_dk(embeddings, labels, bank)
    frac = check_prop2_condition(embeddings, labels, bank, means)
    violations, min_dist = check_properties(embeddings, labels, bank, delta)
    return DiagReport(
        gamma_bar=gamma_bar,
        mean_norm_variance=var,
        proxy_mean_cosine=pmc,
        D_n=d_n,
        D_k=d_k,
        min_proxy_pair_distance=min_dist,
        prop1_holds=violations == 0,
        prop2_condition_fraction=frac,
        property1_violations=violations,
        classes_used=len(means.class_ids),
    )


def report_csv(report: DiagReport, path) -> None:
    """Two-column `key,value` CSV."""
    with open(path, "w") as fh:
        fh.write("key,value\n")
        for key, value in report.rows():
            fh.write(f"{key},{value!r}\n" if isinstance(value, float) else f"{key},{value}\n")
