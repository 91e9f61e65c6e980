"""Gram construction and scaling on tiny hand-checkable matrices."""

import numpy as np
import pytest

from dpident.gram import (
    ScaledGram,
    as_dataset,
    build_gram,
    max_diag_deviation,
    max_offdiag_abs,
    max_rowsum_deviation,
    row_col_sums,
    scale_center,
    submatrix_sum,
)
from dpident.samplers import RngSeed, sample_gaussian


def test_build_gram_hand_cases():
    assert np.array_equal(build_gram(np.eye(2)), np.eye(2))
    assert np.array_equal(build_gram(np.array([[1.0, 2.0]])), np.array([[5.0]]))
    x = np.array([[1.0, 1.0], [1.0, -1.0]])
    assert np.array_equal(build_gram(x), np.diag([2.0, 2.0]))


def test_build_gram_is_symmetric():
    x = sample_gaussian(np.zeros(7), None, 40, RngSeed(1))
    t = build_gram(x)
    assert np.array_equal(t, t.T)


def test_as_dataset_rejects_bad_input():
    with pytest.raises(ValueError):
        as_dataset(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        as_dataset(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        as_dataset(np.empty((0, 3)))


def test_scale_center_single_entry():
    out = scale_center(np.array([[5.0]]), d=1, entry_scale=4.0)
    assert out.matrix == pytest.approx(np.array([[1.0]]))
    assert not out.clipped


def test_scale_center_identity_gram_vanishes():
    out = scale_center(np.eye(3), d=1, entry_scale=2.0)
    assert np.array_equal(out.matrix, np.zeros((3, 3)))
    assert out.n_clipped == 0


def test_scale_center_clamps_and_counts():
    t = np.array([[10.0, 3.0], [3.0, 10.0]])
    out = scale_center(t, d=1, entry_scale=1.0)
    assert np.array_equal(out.matrix, np.ones((2, 2)))
    assert out.clipped and out.n_clipped == 4
    assert isinstance(out, ScaledGram)


def test_scale_center_validation():
    with pytest.raises(ValueError):
        scale_center(np.zeros((2, 3)), d=1, entry_scale=1.0)
    with pytest.raises(ValueError):
        scale_center(np.zeros((2, 2)), d=1, entry_scale=0.0)


def test_row_col_sums_hand_case():
    rows, cols = row_col_sums(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(rows, [3.0, 7.0])
    assert np.array_equal(cols, [4.0, 6.0])
    zr, zc = row_col_sums(np.zeros((3, 3)))
    assert not zr.any() and not zc.any()


def test_row_col_sums_agree_on_symmetric():
    t = build_gram(sample_gaussian(np.zeros(3), None, 10, RngSeed(2)))
    rows, cols = row_col_sums(t)
    assert np.allclose(rows, cols)


def test_submatrix_sum():
    t = np.arange(16, dtype=float).reshape(4, 4)
    assert submatrix_sum(t, np.array([0, 1])) == 0 + 1 + 4 + 5
    assert submatrix_sum(t, np.array([2])) == 10.0
    assert submatrix_sum(np.ones((4, 4)), np.arange(2)) == 4.0


def test_deviation_summaries():
    t = np.array([[3.0, 0.5], [0.5, 1.0]])
    assert max_diag_deviation(t, d=2) == 1.0
    assert max_offdiag_abs(t) == 0.5
    assert max_rowsum_deviation(t, d=2) == 1.5
    assert max_offdiag_abs(np.array([[9.0]])) == 0.0
