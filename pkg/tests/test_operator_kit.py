import numpy as np
import pytest

from splitting.errors import UnsupportedCheckError
from splitting.operator_kit import (
    COCOERCIVE,
    LIPSCHITZ,
    AffineOperator,
    AffineSubspaceNormalCone,
    BoxNormalCone,
    CustomOracle,
    L1Subdifferential,
    LinearForward,
    OperatorBlock,
    QuadraticGradient,
    ZeroOperator,
    affine_enlargement_check,
    audit_forward,
    audit_resolvent,
    eps_subdiff_check,
    forward_eval,
    resolvent,
    soft_threshold,
)

SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_resolvent_examples():
    np.testing.assert_allclose(resolvent(ZeroOperator(), 1.0, [7.0]), [7.0])
    np.testing.assert_allclose(resolvent(L1Subdifferential(1.0), 1.0, [2.0]), [1.0])
    np.testing.assert_allclose(resolvent(L1Subdifferential(1.0), 2.0, [-1.5]), [0.0])
    halfline = BoxNormalCone([0.0], [np.inf])
    np.testing.assert_allclose(resolvent(halfline, 1.0, [-3.0]), [0.0])
    np.testing.assert_allclose(resolvent(halfline, 1.0, [4.0]), [4.0])


def test_resolvent_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        resolvent(ZeroOperator(), 0.0, [1.0])


def test_soft_threshold():
    np.testing.assert_allclose(soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0), [2.0, 0.0, -1.0])


def test_affine_resolvent_solves_linear_system():
    op = AffineOperator(np.eye(2), [1.0, -1.0])
    # x + (x + q) = u
    np.testing.assert_allclose(resolvent(op, 1.0, [3.0, 3.0]), [1.0, 2.0])


def test_affine_operator_must_be_monotone():
    with pytest.raises(ValueError):
        AffineOperator(-np.eye(2))


def test_affine_subspace_projection():
    op = AffineSubspaceNormalCone([[1.0, 0.0]], [2.0])
    np.testing.assert_allclose(resolvent(op, 5.0, [7.0, -3.0]), [2.0, -3.0])
    assert op.contains([2.0, 1.0], [4.0, 0.0])
    assert not op.contains([2.0, 1.0], [0.0, 1.0])


def test_eps_subdiff_check_for_l1():
    pair = L1Subdifferential(1.0).conjugate_pair
    assert eps_subdiff_check(pair, [1.0], [1.0], 0.0)
    # |1| + 0 - 0 = 1
    assert not eps_subdiff_check(pair, [1.0], [0.0], 0.9)
    assert eps_subdiff_check(pair, [1.0], [0.0], 1.0)
    # outside the dual ball the conjugate is infinite
    assert not eps_subdiff_check(pair, [0.0], [1.5], 100.0)


def test_eps_subdiff_check_for_squared_norm():
    pair = QuadraticGradient(np.eye(1), [0.0]).conjugate_pair
    assert eps_subdiff_check(pair, [2.0], [2.0], 0.0)
    assert not eps_subdiff_check(pair, [2.0], [1.0], 0.4)
    assert eps_subdiff_check(pair, [2.0], [1.0], 0.5)


def test_eps_subdiff_check_needs_a_conjugate():
    with pytest.raises(UnsupportedCheckError):
        eps_subdiff_check(None, [1.0], [1.0], 0.0)


def test_forward_eval_examples():
    np.testing.assert_allclose(forward_eval(LinearForward(np.eye(1)), [3.0]), [3.0])
    np.testing.assert_allclose(forward_eval(QuadraticGradient(np.eye(1), [0.0]), [2.0]), [2.0])
    np.testing.assert_allclose(forward_eval(LinearForward(SKEW), [1.0, 0.0]), [0.0, -1.0])


def test_linear_forward_regularity_defaults():
    assert LinearForward(np.eye(2)).regularity == COCOERCIVE
    assert LinearForward(SKEW).regularity == LIPSCHITZ
    with pytest.raises(ValueError):
        LinearForward(np.eye(2), modulus=0.0)


def test_audit_forward_separates_skew_from_gradients(rng):
    skew = audit_forward(LinearForward(SKEW, modulus=1.0), 2)
    assert not skew.cocoercive_ok
    assert skew.lipschitz_ok
    assert skew.supports(LIPSCHITZ)
    assert not skew.supports(COCOERCIVE)

    A = rng.standard_normal((6, 4))
    grad = audit_forward(QuadraticGradient(A, rng.standard_normal(6)), 4)
    assert grad.cocoercive_ok and grad.lipschitz_ok


def test_audit_forward_catches_understated_modulus():
    audit = audit_forward(LinearForward(3.0 * np.eye(2), modulus=1.0), 2)
    assert not audit.cocoercive_ok
    assert not audit.lipschitz_ok


def test_audit_resolvent_on_known_operators():
    for op, dim in ((L1Subdifferential(0.7), 3), (BoxNormalCone([-1.0] * 2, [1.0] * 2), 2),
                    (AffineOperator(SKEW), 2)):
        audit = audit_resolvent(op, dim, lam=0.8)
        assert audit.firmly_nonexpansive
        assert audit.monotone


def test_affine_enlargement_check():
    # F = identity: the gap of v = F(x) + r is |r|^2 / 4
    assert affine_enlargement_check(np.eye(1), [0.0], [0.0], [1.0], 0.25)
    assert not affine_enlargement_check(np.eye(1), [0.0], [0.0], [1.0], 0.2)
    # a skew field has a trivial enlargement
    assert affine_enlargement_check(SKEW, [0.0, 0.0], [1.0, 0.0], [0.0, -1.0], 0.0)
    assert not affine_enlargement_check(SKEW, [0.0, 0.0], [1.0, 0.0], [0.1, -1.0], 10.0)


def test_membership_tests():
    l1 = L1Subdifferential(1.0)
    assert l1.contains([2.0, 0.0], [1.0, -0.3])
    assert not l1.contains([2.0, 0.0], [0.5, 0.0])
    halfline = BoxNormalCone([0.0], [np.inf])
    assert halfline.contains([0.0], [-1.0])
    assert not halfline.contains([0.0], [1.0])
    assert not halfline.contains([-1.0], [0.0])


def test_box_conjugate_is_support_function():
    pair = BoxNormalCone([-1.0, 0.0], [2.0, 3.0]).conjugate_pair
    assert pair.conjugate(np.array([1.0, -1.0])) == pytest.approx(2.0)
    assert pair.value(np.array([5.0, 0.0])) == np.inf


def test_custom_oracle_wraps_failures():
    def broken(lam, u):
        raise RuntimeError("boom")

    op = CustomOracle(broken)
    with pytest.raises(Exception) as info:
        resolvent(op, 1.0, [1.0])
    assert "boom" in str(info.value)
    assert op.conjugate_pair is None


def test_operator_block_needs_an_oracle():
    with pytest.raises(ValueError):
        OperatorBlock()
    block = OperatorBlock(F=LinearForward(np.eye(1)))
    assert block.is_split
    assert isinstance(block.B, ZeroOperator)
    with pytest.raises(UnsupportedCheckError):
        block.resolvent(1.0, np.array([1.0]))
