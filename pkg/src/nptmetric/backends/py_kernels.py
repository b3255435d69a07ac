"""Pure-numpy selection kernels.

These are the reference implementations of the scan-heavy inner loops:
nearest-negative selection over a proxy bank, two-nearest selection for the
neighbour diagnostics, and in-batch hard positive/negative mining. The
compiled backend (_ckernels) implements the same contracts with single-pass
loops; either backend must give identical results on identical inputs.

All kernels take the dot-product matrix (higher dot = smaller on-sphere
distance) and break exact ties toward the smallest index, i.e. the first
index attaining the extreme.
"""

import numpy as np

NAME = "python"


def nearest_negative(dots: np.ndarray, exclude: np.ndarray):
    """Per row i, the column j != exclude[i] with the largest dot.

    Returns (idx int64[B], dot float64[B]). Ties go to the smallest j.
    Rows must have at least 2 columns so a negative always exists.
    """
    rows = np.arange(dots.shape[0])
    masked = dots.copy()
    masked[rows, exclude] = -np.inf
    idx = masked.argmax(axis=1)
    return idx.astype(np.int64), masked[rows, idx]


def two_nearest_negatives(dots: np.ndarray, exclude: np.ndarray):
    """Per row, the two columns != exclude[i] with the largest dots.

    Returns (j int64[B], k int64[B]) ordered by (dot descending, index
    ascending). Rows need at least 3 columns.
    """
    rows = np.arange(dots.shape[0])
    masked = dots.copy()
    masked[rows, exclude] = -np.inf
    # stable sort keeps ascending index order among equal dots
    order = np.argsort(-masked, axis=1, kind="stable")
    return order[:, 0].astype(np.int64), order[:, 1].astype(np.int64)


def hard_pos_neg(dots: np.ndarray, labels: np.ndarray):
    """In-batch mining over a square dot matrix.

    For each anchor i: the hard positive is the same-label j != i with the
    smallest dot (largest distance); the hard negative is the
    different-label j with the largest dot (smallest distance). Returns
    (pos int64[B], neg int64[B]) with -1 where no candidate exists.
    """
    labels = np.asarray(labels)
    b = dots.shape[0]
    rows = np.arange(b)
    same = labels[:, None] == labels[None, :]
    same[rows, rows] = False
    diff = ~same
    diff[rows, rows] = False

    pos_cand = np.where(same, dots, np.inf)
    pos = pos_cand.argmin(axis=1).astype(np.int64)
    pos[~same.any(axis=1)] = -1

    neg_cand = np.where(diff, dots, -np.inf)
    neg = neg_cand.argmax(axis=1).astype(np.int64)
    neg[~diff.any(axis=1)] = -1
    return pos, neg
