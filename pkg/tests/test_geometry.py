import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptmetric.errors import (
    DimensionMismatch,
    InvariantViolation,
    RadiusMismatch,
    ZeroVectorError,
)
from nptmetric.geometry import (
    HypersphereVector,
    cosine_similarity,
    euclidean_distance,
    normalization_jacobian_apply,
    normalize_rows,
    normalize_to_sphere,
    sphere_distance,
)


def vec(components, radius=1.0):
    return HypersphereVector(components=np.asarray(components, float), radius=radius)


def test_construction_validates_norm():
    vec([1.0, 0.0])  # fine
    with pytest.raises(InvariantViolation):
        vec([1.0, 1.0])  # norm sqrt(2) != 1


def test_construction_rejects_tiny_dim_and_bad_radius():
    with pytest.raises(InvariantViolation):
        vec([1.0])
    with pytest.raises(InvariantViolation):
        HypersphereVector(components=np.array([1.0, 0.0]), radius=0.0)


def test_normalize_basic():
    v = normalize_to_sphere(np.array([3.0, 4.0]), 1.0)
    assert np.allclose(v.components, [0.6, 0.8])
    assert v.radius == 1.0


def test_normalize_zero_vector_raises():
    with pytest.raises(ZeroVectorError):
        normalize_to_sphere(np.zeros(3), 1.0)
    with pytest.raises(ZeroVectorError):
        normalize_to_sphere(np.full(3, 1e-13), 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=2, max_size=10),
    st.floats(0.1, 10),
)
def test_normalize_idempotent(values, radius):
    raw = np.asarray(values)
    if np.linalg.norm(raw) < 1e-6:
        raw = raw + 1.0
    once = normalize_to_sphere(raw, radius)
    twice = normalize_to_sphere(once.components, radius)
    assert np.allclose(once.components, twice.components, atol=1e-12)
    assert abs(np.linalg.norm(once.components) - radius) <= 1e-9 * radius


def test_sphere_distance_antipodal_and_self():
    u = vec([1.0, 0.0])
    assert sphere_distance(u, u) == pytest.approx(0.0, abs=1e-15)
    assert sphere_distance(u, vec([-1.0, 0.0])) == pytest.approx(4.0)
    assert sphere_distance(u, vec([0.0, 1.0])) == pytest.approx(2.0)


def test_sphere_distance_equals_squared_euclidean():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = normalize_to_sphere(rng.standard_normal(5), 2.0)
        b = normalize_to_sphere(rng.standard_normal(5), 2.0)
        direct = np.sum((a.components - b.components) ** 2)
        assert sphere_distance(a, b) == pytest.approx(direct, rel=1e-12, abs=1e-12)
        assert euclidean_distance(a, b) == pytest.approx(np.sqrt(direct), rel=1e-12)


def test_distance_requires_matching_radius_and_dim():
    u = vec([1.0, 0.0])
    with pytest.raises(RadiusMismatch):
        sphere_distance(u, vec([2.0, 0.0], radius=2.0))
    with pytest.raises(DimensionMismatch):
        sphere_distance(u, vec([1.0, 0.0, 0.0]))


def test_cosine_similarity_ignores_radius():
    u = vec([0.6, 0.8])
    w = vec([1.2, 1.6], radius=2.0)
    assert cosine_similarity(u, w) == pytest.approx(1.0)
    assert cosine_similarity(u, vec([-0.6, -0.8])) == pytest.approx(-1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0))
def test_monotone_order_equivalence(seed, radius):
    # distance sorts pairs exactly opposite to cosine on a common sphere
    rng = np.random.default_rng(seed)
    base = normalize_to_sphere(rng.standard_normal(4), radius)
    others = [normalize_to_sphere(rng.standard_normal(4), radius) for _ in range(6)]
    dists = [sphere_distance(base, o) for o in others]
    coss = [cosine_similarity(base, o) for o in others]
    assert np.argsort(dists).tolist() == np.argsort([-c for c in coss]).tolist()


def test_sphere_distance_clamped_to_range():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r = rng.uniform(0.5, 3.0)
        a = normalize_to_sphere(rng.standard_normal(3), r)
        b = normalize_to_sphere(rng.standard_normal(3), r)
        d = sphere_distance(a, b)
        assert 0.0 <= d <= 4.0 * r * r


def test_normalize_rows_matches_per_row_op():
    rng = np.random.default_rng(9)
    m = rng.standard_normal((8, 5)) * 3.0
    rows = normalize_rows(m, 1.5)
    for i in range(8):
        expect = normalize_to_sphere(m[i], 1.5).components
        assert np.allclose(rows[i], expect, atol=1e-14)


def test_normalize_rows_reports_bad_row_index():
    m = np.ones((4, 3))
    m[2] = 0.0
    with pytest.raises(ZeroVectorError, match="row 2"):
        normalize_rows(m, 1.0)


def test_jacobian_matches_finite_differences():
    # d/dv of f(r v / ||v||) for arbitrary downstream gradient g
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.standard_normal(6) * rng.uniform(0.5, 2.0)
        g = rng.standard_normal(6)
        r = rng.uniform(0.5, 2.0)
        analytic = normalization_jacobian_apply(v[None, :], g[None, :], r)[0]
        h = 1e-6
        fd = np.empty(6)
        for k in range(6):
            up, down = v.copy(), v.copy()
            up[k] += h
            down[k] -= h
            zu = r * up / np.linalg.norm(up)
            zd = r * down / np.linalg.norm(down)
            fd[k] = g @ (zu - zd) / (2 * h)
        assert np.allclose(analytic, fd, atol=1e-7)


def test_jacobian_kills_radial_component():
    # moving raw vector along itself cannot change the normalized output
    rng = np.random.default_rng(5)
    v = rng.standard_normal((3, 4))
    g = rng.standard_normal((3, 4))
    jg = normalization_jacobian_apply(v, g, 1.0)
    radial = np.einsum("ij,ij->i", jg, v)
    assert np.allclose(radial, 0.0, atol=1e-12)
