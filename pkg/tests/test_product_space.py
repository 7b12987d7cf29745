import numpy as np
import pytest

from splitting.errors import DimensionMismatchError
from splitting.product_space import (
    DenseLinearMap,
    GammaMetric,
    LinearOpFamily,
    ProductPoint,
    estimate_operator_norm,
    implied_dual_block,
)


def test_gamma_inner_weights_only_the_z_block():
    p = ProductPoint([1.0], ([2.0],))
    q = ProductPoint([3.0], ([4.0],))
    assert GammaMetric(1.0).inner(p, q) == pytest.approx(11.0)
    assert GammaMetric(2.0).inner(p, q) == pytest.approx(14.0)
    assert GammaMetric(2.0).norm_sq(p) == pytest.approx(6.0)


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        GammaMetric(0.0)


def test_implied_dual_block(scalar_family):
    p = ProductPoint([0.0], ([3.0],))
    np.testing.assert_allclose(implied_dual_block(p, scalar_family), [-6.0])
    zero = ProductPoint.zeros(scalar_family.dims)
    np.testing.assert_allclose(implied_dual_block(zero, scalar_family), [0.0])


def test_family_apply_and_adjoint():
    family = LinearOpFamily([DenseLinearMap(np.array([[1.0, 1.0]]))], 2)
    assert family.n == 2
    assert family.dims == (2, 1)
    np.testing.assert_allclose(family.apply(1, [2.0, 3.0]), [5.0])
    np.testing.assert_allclose(family.adjoint(1, [3.0]), [3.0, 3.0])
    # the last map is the identity on H0
    np.testing.assert_allclose(family.apply(2, [2.0, 3.0]), [2.0, 3.0])
    assert family.block_dim(1) == 1
    assert family.block_dim(2) == 2


def test_adjoint_gap_is_tight(rng):
    G = rng.standard_normal((5, 3))
    family = LinearOpFamily([DenseLinearMap(G), DenseLinearMap(G[:2])], 3)
    assert family.adjoint_gap() <= 1e-12


def test_operator_norm_estimate_matches_svd(rng):
    G = rng.standard_normal((6, 4))
    estimate = estimate_operator_norm(DenseLinearMap(G), max_iter=2000, rtol=1e-14)
    assert estimate == pytest.approx(np.linalg.norm(G, 2), rel=1e-6)


def test_max_norm_sq_includes_identity():
    family = LinearOpFamily([DenseLinearMap(0.5 * np.eye(2), norm_hint=0.5)], 2)
    assert family.max_norm_sq() == pytest.approx(1.0)
    family = LinearOpFamily([DenseLinearMap(3.0 * np.eye(2), norm_hint=3.0)], 2)
    assert family.max_norm_sq() == pytest.approx(9.0)


def test_point_arithmetic_and_flatten():
    p = ProductPoint([1.0, 2.0], ([3.0],))
    q = ProductPoint([0.5, 0.5], ([1.0],))
    np.testing.assert_allclose((p - q).flatten(), [0.5, 1.5, 2.0])
    np.testing.assert_allclose((2.0 * p + q).flatten(), [2.5, 4.5, 7.0])
    back = ProductPoint.from_flat(p.flatten(), p.dims)
    np.testing.assert_allclose(back.z, p.z)
    np.testing.assert_allclose(back.w[0], p.w[0])


def test_points_are_read_only():
    p = ProductPoint([1.0], ([2.0],))
    with pytest.raises(ValueError):
        p.z[0] = 5.0


def test_dimension_errors(scalar_family):
    with pytest.raises(DimensionMismatchError):
        LinearOpFamily([DenseLinearMap(np.eye(3))], 2)
    with pytest.raises(DimensionMismatchError):
        scalar_family.apply(3, [1.0])
    with pytest.raises(DimensionMismatchError):
        scalar_family.check_point(ProductPoint([1.0, 2.0], ([1.0],)))
    with pytest.raises(DimensionMismatchError):
        ProductPoint([1.0], ([1.0],)) + ProductPoint([1.0], ([1.0, 2.0],))
    with pytest.raises(DimensionMismatchError):
        ProductPoint.from_flat(np.zeros(3), (1, 1))
