"""Vector operations on a radius-r hypersphere.

Distances between on-sphere vectors use the squared-Euclidean form
``d(u, v) = 2r^2 - 2 u.v``, which is an affine function of cosine similarity
and therefore preserves nearest-neighbour ordering with both the plain
Euclidean distance and the cosine score. All numerics are 64-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    RadiusMismatch,
    ZeroVectorError,
)

# Norm drift tolerated on a stored vector, relative to its radius. Loose
# enough that SGD drift on raw parameters (normalized on read) never trips it.
NORM_RTOL = 1e-9

# Norms at or below this are treated as zero: no direction is recoverable.
ZERO_NORM = 1e-12


@dataclass(frozen=True)
class HypersphereVector:
    """An n-dimensional vector constrained to lie on a sphere of radius r."""

    components: np.ndarray
    radius: float

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "radius", float(self.radius))
        if comps.ndim != 1 or comps.shape[0] < 2:
            raise InvariantViolation(
                f"hypersphere vector needs n >= 2 components, got shape {comps.shape}"
            )
        if not self.radius > 0.0:
            raise InvariantViolation(f"radius must be positive, got {self.radius}")
        norm = float(np.linalg.norm(comps))
        if abs(norm - self.radius) > NORM_RTOL * self.radius:
            raise InvariantViolation(
                f"norm {norm!r} is off the radius-{self.radius!r} sphere"
            )

    @property
    def dim(self) -> int:
        return self.components.shape[0]


def normalize_to_sphere(v, r: float) -> HypersphereVector:
    """Scale v onto the radius-r sphere: r * v / ||v||.

    Raises ZeroVectorError when ||v|| <= 1e-12 (no direction to keep).
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM:
        raise ZeroVectorError(f"cannot normalize vector with norm {norm!r}")
    return HypersphereVector(components=(r / norm) * v, radius=float(r))


def _check_pair(u: HypersphereVector, v: HypersphereVector, check_radius=True):
    if u.dim != v.dim:
        raise DimensionMismatch(f"dimensions differ: {u.dim} vs {v.dim}")
    if check_radius and abs(u.radius - v.radius) > 1e-12 * max(u.radius, v.radius):
        raise RadiusMismatch(f"radii differ: {u.radius!r} vs {v.radius!r}")


def sphere_distance(u: HypersphereVector, v: HypersphereVector) -> float:
    """Squared-Euclidean distance 2r^2 - 2 u.v, clamped into [0, 4r^2]."""
    _check_pair(u, v)
    r2 = u.radius * v.radius
    d = 2.0 * r2 - 2.0 * float(u.components @ v.components)
    return min(max(d, 0.0), 4.0 * r2)


def euclidean_distance(u: HypersphereVector, v: HypersphereVector) -> float:
    """Plain Euclidean distance: sqrt of sphere_distance."""
    return math.sqrt(sphere_distance(u, v))


def cosine_similarity(u: HypersphereVector, v: HypersphereVector) -> float:
    """Cosine of the angle between u and v, clamped into [-1, 1].

    Rounding can push the raw ratio past +-1; the clamp keeps downstream
    arccos-free comparisons safe.
    """
    _check_pair(u, v, check_radius=False)
    c = float(u.components @ v.components) / (u.radius * v.radius)
    return min(max(c, -1.0), 1.0)


# Array helpers shared by the batch-oriented modules. Rows are vectors.


def normalize_rows(m: np.ndarray, r: float) -> np.ndarray:
    """Row-wise r * v / ||v|| for a 2-D array; the batched normalize_to_sphere.

    Raises ZeroVectorError naming the first offending row.
    """
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(norms <= ZERO_NORM)
    if bad.size:
        raise ZeroVectorError(f"row {bad[0]} has norm {norms[bad[0]]!r}")
    return (r / norms)[:, None] * m


def normalization_jacobian_apply(raw: np.ndarray, grad_normed: np.ndarray, r: float) -> np.ndarray:
    """Pull gradients back through row-wise v -> r * v / ||v||.

    The Jacobian of the map is (r/||v||) (I - v v^T / ||v||^2), symmetric, so
    applying it to the upstream gradient gives the raw-space gradient.
    """
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1)
    proj = np.einsum("ij,ij->i", raw, grad_normed) / (norms * norms)
    return (r / norms)[:, None] * (grad_normed - proj[:, None] * raw)
