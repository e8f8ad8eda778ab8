import numpy as np
import pytest

from ommo.geometry import (Ball, Box, NotPSDError, Product, Simplex, contains, domain_from_dict,
                           project_weighted)
from ommo.harness.suites import grid_projection

SQ = Box(-np.ones(2), np.ones(2))


def test_contains_examples():
    assert contains(SQ, np.zeros(2), 0.0)
    assert contains(Simplex(2), np.array([0.6, 0.4]), 0.0)
    assert not contains(Ball(np.zeros(2), 1.0), np.array([1.1, 0.0]), 0.05)


def test_contains_dimension_mismatch():
    with pytest.raises(ValueError):
        contains(SQ, np.zeros(3))


def test_interior_point_is_fixed():
    z = project_weighted(np.array([0.2, -0.3]), np.eye(2), SQ)
    np.testing.assert_allclose(z, [0.2, -0.3])


def test_diagonal_box_clamps():
    z = project_weighted(np.array([2.0, 0.0]), np.diag([3.0, 1.0]), SQ)
    np.testing.assert_allclose(z, [1.0, 0.0])


def test_weighted_simplex_kkt_example():
    z = project_weighted(np.array([0.8, 0.8]), np.diag([2.0, 1.0]), Simplex(2))
    np.testing.assert_allclose(z, [0.6, 0.4], atol=1e-12)
    # 1e-4 grid over the simplex as an independent check
    p = np.linspace(0, 1, 10_001)
    pts = np.stack([p, 1 - p], 1)
    d = pts - 0.8
    best = pts[np.argmin(2 * d[:, 0] ** 2 + d[:, 1] ** 2)]
    np.testing.assert_allclose(z, best, atol=1e-4)


def test_ball_scalar_weight_is_radial():
    z = project_weighted(np.array([3.0, 4.0]), 2.0, Ball(np.zeros(2), 1.0))
    np.testing.assert_allclose(z, [0.6, 0.8], atol=1e-12)


def test_non_psd_weight_rejected():
    with pytest.raises(NotPSDError):
        project_weighted(np.zeros(2), np.diag([1.0, -1.0]), SQ)


def test_full_weight_matches_grid_oracle():
    A = np.array([[1.969, -0.1635], [-0.1635, 0.772]])
    u = np.array([-1.5855, 0.7613])
    z = project_weighted(u, A, SQ)
    assert np.linalg.norm(z - grid_projection(u, A, SQ)) <= 2e-3
    assert z[0] == pytest.approx(-1.0)


def test_product_projection_is_factorwise():
    dom = Product((Simplex(2), Box(0.5 * np.ones(2), 1.5 * np.ones(2))))
    u = np.array([0.9, 0.5, 2.0, 0.0])
    z = project_weighted(u, np.eye(4), dom)
    np.testing.assert_allclose(z, [0.7, 0.3, 1.5, 0.5], atol=1e-12)


def test_product_diameter_is_exact():
    dom = Product((Simplex(2), Box(0.5 * np.ones(2), 1.5 * np.ones(2))))
    assert dom.diameter() == pytest.approx(np.sqrt(2.0 + 2.0))


@pytest.mark.parametrize("dom", [SQ, Simplex(3, 2.0), Ball(np.array([0.5, 0.0]), 2.0),
                                 Product((Simplex(2), SQ))])
def test_round_trip_serialization(dom):
    back = domain_from_dict(dom.to_dict())
    assert back.to_dict() == dom.to_dict()


def test_samples_and_grids_are_feasible(rng):
    for dom in (SQ, Simplex(3), Ball(np.zeros(3), 1.0), Product((Simplex(2), SQ))):
        assert all(dom.contains(z, 1e-12) for z in dom.sample(rng, 50))
        assert all(dom.contains(z, 1e-12) for z in dom.grid(5))
