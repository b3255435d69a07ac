"""Verification (ROC / TAR@FAR / AUC) and identification (rank-1) protocols.

Scores are cosine similarities computed radius-free, so every metric here is
invariant to rescaling all embeddings by a common factor. Acceptance is
strict (score > threshold) and rank-1 ties resolve against the probe; both
choices keep small-sample results reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .errors import (
    InvariantViolation,
    MissingGalleryIdentity,
    NoPairs,
    ZeroVectorError,
)
from .geometry import HypersphereVector, normalize_rows
from .model import EmbedderModel, model_forward

TAR_FAR_TARGETS = (0.0, 1e-3, 1e-2, 1e-1)


@dataclass
class EvalReport:
    roc: list = field(default_factory=list)  # (far, tar), far strictly increasing
    auc: float = float("nan")
    tar_at_far: dict = field(default_factory=dict)
    rank1: Optional[float] = None
    n_genuine: int = 0
    n_impostor: int = 0
    n_probes: int = 0
    n_distractors: int = 0

    def rows(self):
        out = [("auc", self.auc)]
        for far in sorted(self.tar_at_far):
            out.append((f"tar_at_far_{far:g}", self.tar_at_far[far]))
        if self.rank1 is not None:
            out.append(("rank1", self.rank1))
        out += [
            ("n_genuine", self.n_genuine),
            ("n_impostor", self.n_impostor),
            ("n_probes", self.n_probes),
            ("n_distractors", self.n_distractors),
        ]
        return out


def embed_all(model: EmbedderModel, dataset, radius: float):
    """Embed every sample and lift it onto the radius-r sphere."""
    raw, _ = model_forward(model, dataset.inputs)
    out = []
    for i, row in enumerate(raw):
        norm = np.linalg.norm(row)
        if norm <= 1e-12:
            raise ZeroVectorError(f"sample {i} embeds to a (near-)zero vector")
        out.append(HypersphereVector(components=radius * row / norm, radius=radius))
    return out


def embedding_matrix(embeddings) -> np.ndarray:
    """Stack HypersphereVectors (or accept an ndarray unchanged)."""
    if isinstance(embeddings, np.ndarray):
        return embeddings
    return np.stack([e.components for e in embeddings])


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) cosine matrix, radius-free."""
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    return an @ bn.T


def sample_pairs(labels: np.ndarray, pairs_per_kind: int, seed: int):
    """Seeded genuine/impostor index pairs, without replacement.

    Returns (genuine (g, 2), impostor (m, 2)); each capped at availability.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n < 2:
        raise NoPairs("need at least 2 samples")
    i, j = np.triu_indices(n, k=1)
    same = labels[i] == labels[j]
    genuine = np.stack([i[same], j[same]], axis=1)
    impostor = np.stack([i[~same], j[~same]], axis=1)
    if len(genuine) == 0 or len(impostor) == 0:
        raise NoPairs(
            f"{len(genuine)} genuine / {len(impostor)} impostor pairs constructible"
        )
    rng = np.random.default_rng(seed)
    if len(genuine) > pairs_per_kind:
        genuine = genuine[rng.choice(len(genuine), pairs_per_kind, replace=False)]
    if len(impostor) > pairs_per_kind:
        impostor = impostor[rng.choice(len(impostor), pairs_per_kind, replace=False)]
    return genuine, impostor


def roc_points(genuine_scores: np.ndarray, impostor_scores: np.ndarray):
    """Threshold sweep over the pooled score multiset.

    Returns (points, auc): `points` is the full polyline — one (far, tar)
    per unique threshold, descending, bracketed by (0,0) and (1,1) — and
    `auc` its trapezoid area, which equals the probability a random genuine
    score beats a random impostor score (ties counted half).
    """
    g = np.sort(np.asarray(genuine_scores, dtype=np.float64))
    s = np.sort(np.asarray(impostor_scores, dtype=np.float64))
    thresholds = np.unique(np.concatenate([g, s]))[::-1]
    # accept iff score > t:  count of scores above t via sorted search
    tar = 1.0 - np.searchsorted(g, thresholds, side="right") / len(g)
    far = 1.0 - np.searchsorted(s, thresholds, side="right") / len(s)
    fars = np.concatenate([[0.0], far, [1.0]])
    tars = np.concatenate([[0.0], tar, [1.0]])
    auc = float(np.trapezoid(tars, fars))
    return list(zip(fars.tolist(), tars.tolist())), auc


def dedupe_roc(points):
    """Strictly-increasing-FAR view: max TAR per achieved FAR."""
    best = {}
    for far, tar in points:
        if far not in best or tar > best[far]:
            best[far] = tar
    return [(far, best[far]) for far in sorted(best)]


def tar_at_far(points, target: float) -> float:
    """Conservative readout: TAR at the largest achieved FAR <= target."""
    eligible = [(far, tar) for far, tar in points if far <= target]
    if not eligible:
        return 0.0
    far_star = max(f for f, _ in eligible)
    return max(t for f, t in eligible if f == far_star)


def verification_roc(embeddings, labels, pair_seed: int = 0,
                     pairs_per_kind: int = 10000) -> EvalReport:
    """Cosine-score verification over seeded genuine/impostor pairs."""
    emb = embedding_matrix(embeddings)
    labels = np.asarray(labels, dtype=np.int64)
    genuine, impostor = sample_pairs(labels, pairs_per_kind, pair_seed)
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    g_scores = np.einsum("ij,ij->i", unit[genuine[:, 0]], unit[genuine[:, 1]])
    s_scores = np.einsum("ij,ij->i", unit[impostor[:, 0]], unit[impostor[:, 1]])
    points, auc = roc_points(g_scores, s_scores)
    curve = dedupe_roc(points)
    return EvalReport(
        roc=curve,
        auc=auc,
        tar_at_far={t: tar_at_far(curve, t) for t in TAR_FAR_TARGETS},
        n_genuine=len(genuine),
        n_impostor=len(impostor),
    )


def rank1_identification(gallery_embeddings, gallery_labels, probe_embeddings,
                         probe_labels, distractor_embeddings=None) -> float:
    """Fraction of probes whose top cosine match is their own gallery entry.

    The competition set is every other gallery entry plus all distractors;
    an exact score tie counts against the probe.
    """
    gal = embedding_matrix(gallery_embeddings)
    gal_labels = np.asarray(gallery_labels, dtype=np.int64)
    probes = embedding_matrix(probe_embeddings)
    probe_labels = np.asarray(probe_labels, dtype=np.int64)
    if len(np.unique(gal_labels)) != len(gal_labels):
        raise InvariantViolation("gallery must hold exactly one entry per identity")
    present = set(gal_labels.tolist())
    missing = [int(y) for y in np.unique(probe_labels) if int(y) not in present]
    if missing:
        raise MissingGalleryIdentity(f"probe labels without gallery entries: {missing}")
    if len(probes) == 0:
        raise InvariantViolation("no probes")

    own_col = np.searchsorted(gal_labels, probe_labels, sorter=np.argsort(gal_labels))
    own_col = np.argsort(gal_labels)[own_col]

    scores = _cosine_rows(probes, gal)
    if distractor_embeddings is not None and len(distractor_embeddings):
        dis = embedding_matrix(distractor_embeddings)
        scores = np.concatenate([scores, _cosine_rows(probes, dis)], axis=1)
    own = scores[np.arange(len(probes)), own_col]
    _, best_other = backends.kernels().nearest_negative(
        np.ascontiguousarray(scores), own_col.astype(np.int64)
    )
    return float((own > best_other).mean())


def random_distractors(count: int, dim: int, radius: float, seed: int) -> np.ndarray:
    """Seeded unlabeled embeddings uniform on the radius-r sphere."""
    if count == 0:
        return np.empty((0, dim))
    rng = np.random.default_rng(seed)
    return normalize_rows(rng.standard_normal((count, dim)), radius)


def split_gallery_probes(embeddings, labels, seed: int = 0):
    """One seeded held-out sample per identity as gallery, rest as probes.

    Returns (gallery, gallery_labels, probes, probe_labels) as arrays.
    """
    emb = embedding_matrix(embeddings)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    gal_idx = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        gal_idx.append(int(members[rng.integers(0, len(members))]))
    gal_idx = np.asarray(sorted(gal_idx), dtype=np.int64)
    probe_mask = np.ones(len(labels), dtype=bool)
    probe_mask[gal_idx] = False
    return emb[gal_idx], labels[gal_idx], emb[probe_mask], labels[probe_mask]


def roc_csv(report: EvalReport, path) -> None:
    """`far,tar` rows of the deduplicated curve."""
    with open(path, "w") as fh:
        fh.write("far,tar\n")
        for far, tar in report.roc:
            fh.write(f"{far!r},{tar!r}\n")


def report_csv(report: EvalReport, path) -> None:
    """`key,value` lines."""
    with open(path, "w") as fh:
        fh.write("key,value\n")
        for key, value in report.rows():
            fh.write(f"{key},{value!r}\n" if isinstance(value, float) else f"{key},{value}\n")
