import numpy as np
import pytest

from splitting.diagnostics import residuals
from splitting.errors import DimensionMismatchError
from splitting.product_space import GammaMetric, ProductPoint
from splitting.separator import BlockTriple, Separator, build_separator, separator_eval


def _example_triples():
    return [BlockTriple([0.5], [1.0], 0.1, 1.0), BlockTriple([0.5], [-1.0], 0.1, 1.0)]


def test_separator_value_and_gradient(scalar_family):
    sep = build_separator(_example_triples(), scalar_family, GammaMetric(1.0))
    p = ProductPoint([1.0], ([1.0],))
    # dual part 2 * 1 - 1 = 1, primal part 0.5 - 2 * 0.5 = -0.5
    np.testing.assert_allclose(sep.gradient.z, [1.0])
    np.testing.assert_allclose(sep.gradient.w[0], [-0.5])
    assert sep.grad_norm_sq == pytest.approx(1.25)
    assert separator_eval(sep, p) == pytest.approx(0.3)
    assert sep.block_value(p) == pytest.approx(0.3)


def test_gamma_rescales_the_z_gradient(scalar_family):
    sep = Separator(_example_triples(), scalar_family, GammaMetric(4.0))
    np.testing.assert_allclose(sep.gradient.z, [0.25])
    assert sep.grad_norm_sq == pytest.approx(0.5)
    # the value of the affine function does not depend on the metric
    assert sep.value(ProductPoint([1.0], ([1.0],))) == pytest.approx(0.3)


def test_collected_and_blockwise_forms_agree(scalar_family, rng):
    triples = [BlockTriple(rng.standard_normal(1), rng.standard_normal(1), 0.2, 0.7),
               BlockTriple(rng.standard_normal(1), rng.standard_normal(1), 0.05, 1.3)]
    for gamma in (0.25, 1.0, 4.0):
        sep = Separator(triples, scalar_family, GammaMetric(gamma))
        for _ in range(20):
            p = ProductPoint(rng.standard_normal(1), (rng.standard_normal(1),))
            assert sep.value(p) == pytest.approx(sep.block_value(p), abs=1e-12)


def test_consistent_triples_vanish_at_their_solution(scalar_family):
    z, w1 = 1.5, 0.7
    triples = [BlockTriple([3.0], [w1], 0.0, 1.0), BlockTriple([z], [-2.0 * w1], 0.0, 1.0)]
    sep = Separator(triples, scalar_family, GammaMetric(1.0))
    assert sep.grad_norm_sq == pytest.approx(0.0, abs=1e-24)
    assert sep.value(ProductPoint([z], ([w1],))) == pytest.approx(0.0, abs=1e-12)


def test_gradient_norm_matches_residuals(scalar_family):
    triples = _example_triples()
    res = residuals(triples, scalar_family)
    assert res.dual == pytest.approx(1.0)
    assert res.primal_max == pytest.approx(0.5)
    assert res.eps_sum == pytest.approx(0.2)
    for gamma in (0.5, 2.0):
        sep = Separator(triples, scalar_family, GammaMetric(gamma))
        assert sep.grad_norm_sq == pytest.approx(res.dual ** 2 / gamma + res.primal_max ** 2)


def test_triple_validation(scalar_family):
    with pytest.raises(ValueError):
        BlockTriple([1.0], [1.0], -0.1, 1.0)
    with pytest.raises(ValueError):
        BlockTriple([1.0], [1.0], 0.0, 0.0)
    with pytest.raises(DimensionMismatchError):
        BlockTriple([1.0, 2.0], [1.0], 0.0, 1.0)
    with pytest.raises(DimensionMismatchError):
        Separator(_example_triples()[:1], scalar_family, GammaMetric(1.0))
