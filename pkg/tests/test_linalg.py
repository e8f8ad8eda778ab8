import numpy as np
import pytest

from ommo.linalg import (REFRESH_EVERY, RegularityMatrix, SingularMatrixError, Split, add_psd,
                         block_split_matrix, block_update, init_regularity, is_psd,
                         rank_one_update, scalar_update)


@pytest.mark.parametrize("d, eps, diag", [(2, 1.0, 1.0), (3, 4.0, 4.0), (1, 0.5, 0.5)])
def test_init_regularity(d, eps, diag):
    R = init_regularity(d, eps)
    np.testing.assert_array_equal(R.A, diag * np.eye(d))
    np.testing.assert_array_equal(R.A_inv, np.eye(d) / diag)


@pytest.mark.parametrize("d, eps", [(0, 1.0), (2, 0.0), (2, -1.0)])
def test_init_regularity_rejects(d, eps):
    with pytest.raises(ValueError):
        init_regularity(d, eps)


def test_rank_one_diagonal_case():
    R = rank_one_update(init_regularity(2, 1.0), [1.0, 0.0])
    np.testing.assert_allclose(R.A, np.diag([2.0, 1.0]))
    np.testing.assert_allclose(R.A_inv, np.diag([0.5, 1.0]))


def test_rank_one_matches_hand_inverse():
    R = rank_one_update(init_regularity(2, 1.0), [1.0, 1.0])
    np.testing.assert_allclose(R.A, [[2, 1], [1, 2]])
    np.testing.assert_allclose(R.A_inv, np.array([[2, -1], [-1, 2]]) / 3, atol=1e-15)


def test_rank_one_random_spd(rng):
    M = rng.standard_normal((4, 4))
    A = M @ M.T + np.eye(4)
    R = RegularityMatrix(A, np.linalg.inv(A))
    v = rng.standard_normal(4)
    out = rank_one_update(R, v)
    assert np.max(np.abs(out.A_inv - np.linalg.inv(A + np.outer(v, v)))) <= 1e-10


def test_rank_one_falls_back_when_denominator_vanishes():
    # an indefinite "regularity" matrix makes 1 + v'A^{-1}v reach zero
    A = np.diag([1.0, -1.0])
    R = RegularityMatrix(A, np.linalg.inv(A))
    with pytest.raises(SingularMatrixError):
        rank_one_update(R, [0.0, 1.0])


def test_periodic_refresh_keeps_inverse_exact(rng):
    R = init_regularity(3, 1.0)
    for _ in range(REFRESH_EVERY + 5):
        R = rank_one_update(R, rng.standard_normal(3))
    assert R.inverse_residual() < 1e-10


def test_scalar_update_examples():
    R = scalar_update(init_regularity(2, 1.0), 3.0)
    np.testing.assert_array_equal(R.A, 3 * np.eye(2))
    np.testing.assert_allclose(R.A_inv, np.eye(2) / 3)
    R = scalar_update(init_regularity(5, 2.0), 1.0)
    np.testing.assert_array_equal(R.A, np.eye(5))
    R = scalar_update(init_regularity(2, 1.0), 7.0)
    assert np.max(np.abs(R.A_inv @ R.A - np.eye(2))) <= 1e-15
    with pytest.raises(ValueError):
        scalar_update(R, 0.0)


def test_block_split_examples():
    g = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(block_split_matrix(g, (3,)), np.outer(g, g))
    np.testing.assert_array_equal(block_split_matrix([2.0, 3.0], (1, 1)), np.diag([4.0, 9.0]))
    M = block_split_matrix([1.0, 2.0, 3.0], Split((2, 1)))
    np.testing.assert_array_equal(M, [[1, 2, 0], [2, 4, 0], [0, 0, 9]])
    with pytest.raises(ValueError):
        block_split_matrix([1.0, 2.0], (2, 1))


def test_block_update_matches_dense(rng):
    R = init_regularity(5, 1.0)
    F = rng.standard_normal(5)
    out = block_update(R, F, (2, 3))
    np.testing.assert_allclose(out.A, np.eye(5) + block_split_matrix(F, (2, 3)))
    assert out.inverse_residual() < 1e-12


def test_add_psd_low_and_full_rank(rng):
    R = init_regularity(4, 2.0)
    v = rng.standard_normal(4)
    low = add_psd(R, np.outer(v, v))
    np.testing.assert_allclose(low.A_inv, np.linalg.inv(R.A + np.outer(v, v)), atol=1e-12)
    M = rng.standard_normal((4, 4))
    full = add_psd(R, M @ M.T)
    np.testing.assert_allclose(full.A_inv, np.linalg.inv(R.A + M @ M.T), atol=1e-12)
    np.testing.assert_array_equal(R.A, 2.0 * np.eye(4))  # input untouched
    with pytest.raises(ValueError):
        add_psd(R, -np.eye(4))


def test_is_psd():
    assert is_psd(np.eye(3))
    assert not is_psd(np.diag([1.0, -1e-3]))
    assert not is_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
