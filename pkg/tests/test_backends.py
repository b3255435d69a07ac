import subprocess
import sys

import numpy as np
import pytest

from nptmetric import backends

HAS_C = "c" in backends.available_backends()
both = pytest.mark.skipif(not HAS_C, reason="compiled extension not built")


def _mods():
    return [backends.get_backend(n) for n in backends.available_backends()]


@both
def test_backends_agree_on_random_inputs(rng):
    for _ in range(50):
        b, c = int(rng.integers(1, 12)), int(rng.integers(3, 9))
        dots = rng.standard_normal((b, c))
        exclude = rng.integers(0, c, b).astype(np.int64)
        picks = [m.nearest_negative(dots, exclude) for m in _mods()]
        for idx, dot in picks[1:]:
            assert np.array_equal(idx, picks[0][0])
            assert np.array_equal(dot, picks[0][1])  # bit-identical
        two = [m.two_nearest_negatives(dots, exclude) for m in _mods()]
        for j, k in two[1:]:
            assert np.array_equal(j, two[0][0])
            assert np.array_equal(k, two[0][1])
        sq = rng.standard_normal((b, b))
        labels = rng.integers(0, max(1, b // 2 + 1), b).astype(np.int64)
        mined = [m.hard_pos_neg(sq, labels) for m in _mods()]
        for p, n in mined[1:]:
            assert np.array_equal(p, mined[0][0])
            assert np.array_equal(n, mined[0][1])


@both
def test_backends_agree_on_exact_ties():
    # columns 1 and 3 tie for the max; both backends must pick 1
    dots = np.array([[0.2, 0.9, 0.1, 0.9, 0.3]])
    exclude = np.array([0], dtype=np.int64)
    for m in _mods():
        idx, dot = m.nearest_negative(dots, exclude)
        assert idx.tolist() == [1]
        assert dot.tolist() == [0.9]
        j, k = m.two_nearest_negatives(dots, exclude)
        assert (j.tolist(), k.tolist()) == ([1], [3])

    # mining ties: two equally-hard positives -> smallest index
    sq = np.array([
        [0.0, 0.5, 0.5, 0.8],
        [0.5, 0.0, 0.2, 0.1],
        [0.5, 0.2, 0.0, 0.4],
        [0.8, 0.1, 0.4, 0.0],
    ])
    labels = np.array([0, 0, 0, 1], dtype=np.int64)
    for m in _mods():
        pos, neg = m.hard_pos_neg(sq, labels)
        assert pos[0] == 1  # dots 0.5 at j=1 and j=2 tie
        assert neg[3] == 0  # 0.8 is the closest different-label sample


def test_mining_reports_missing_candidates():
    sq = np.zeros((3, 3))
    labels = np.array([0, 1, 2], dtype=np.int64)  # nobody has a positive
    pos, neg = backends.kernels().hard_pos_neg(sq, labels)
    assert (pos == -1).all()
    assert (neg >= 0).all()
    labels2 = np.array([4, 4, 4], dtype=np.int64)  # nobody has a negative
    pos2, neg2 = backends.kernels().hard_pos_neg(sq, labels2)
    assert (pos2 >= 0).all()
    assert (neg2 == -1).all()


def test_set_backend_switches_and_rejects_unknown():
    original = backends.backend_name()
    try:
        backends.set_backend("python")
        assert backends.backend_name() == "python"
        assert backends.kernels() is backends.get_backend("python")
    finally:
        backends.set_backend(original)
    with pytest.raises(ValueError):
        backends.set_backend("fortran")
    with pytest.raises(ValueError):
        backends.get_backend("fortran")


def test_env_var_forces_python_backend():
    code = (
        "from nptmetric import backends; "
        "print(backends.backend_name())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "NPTMETRIC_BACKEND": "python"},
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "python"


@both
def test_auto_prefers_compiled():
    code = (
        "from nptmetric import backends; "
        "print(backends.backend_name())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin"},
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "c"
