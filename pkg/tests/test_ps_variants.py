import numpy as np
import pytest

from splitting.errors import InnerSolverContractError, VariantCompatibilityError
from splitting.operator_kit import (
    AffineOperator,
    L1Subdifferential,
    LinearForward,
    OperatorBlock,
    QuadraticGradient,
    WholeSpace,
    ZeroOperator,
)
from splitting.pipeline import VerifyConfig, generate_problem
from splitting.problems import make_skew_saddle
from splitting.ps_core import ExactProxSolver, PerturbedProxSolver, SolverConfig, error_criterion, solve
from splitting.ps_variants import (
    VariantInnerSolver,
    VariantKind,
    check_compatibility,
    fb_block_step,
    fb_inclusion_audit,
    make_inner_solver,
    tseng_block_step,
    tseng_inclusion_audit,
    variant_lambda_bounds,
    variant_stepsize,
)

FB = VariantKind.FORWARD_BACKWARD
TSENG = VariantKind.TSENG


def test_variant_names_parse():
    assert VariantKind.parse("fb") is FB
    assert VariantKind.parse("Forward_Backward") is FB
    assert VariantKind.parse("fbf") is TSENG
    with pytest.raises(ValueError):
        VariantKind.parse("douglas_rachford")


def test_stepsizes():
    assert variant_stepsize(FB, 0.5, 1.0) == pytest.approx(0.5)
    assert variant_stepsize(TSENG, 0.5, 1.0) == pytest.approx(0.5)
    assert variant_stepsize(FB, 0.999, 2.0) == pytest.approx(0.998001)
    assert variant_lambda_bounds(TSENG, 0.5, [1.0, 4.0]) == pytest.approx((0.125, 0.5))
    with pytest.raises(ValueError):
        variant_stepsize(FB, 0.0, 1.0)
    with pytest.raises(ValueError):
        variant_stepsize(TSENG, 0.5, 0.0)


def test_forward_backward_step_examples():
    identity = LinearForward(np.eye(1), modulus=1.0)
    tz, tw = np.array([2.0]), np.array([0.0])
    t = fb_block_step(identity, ZeroOperator(), WholeSpace(), 0.5, tz, tw)
    np.testing.assert_allclose(t.x, [1.0])
    np.testing.assert_allclose(t.y, [2.0])
    assert t.eps == pytest.approx(0.25)
    # 2 lam eps equals sigma^2 ||tz - x||^2 at sigma = 0.5
    assert 2 * t.lam * t.eps == pytest.approx(0.25 * 1.0)
    assert error_criterion(t, tz, tw, 0.5).ok

    zero_field = LinearForward(np.zeros((1, 1)), modulus=1.0)
    t = fb_block_step(zero_field, L1Subdifferential(1.0), WholeSpace(), 0.5, tz, tw)
    np.testing.assert_allclose(t.x, [1.5])
    assert t.eps == pytest.approx(0.0625)


def test_tseng_step_examples():
    identity = LinearForward(np.eye(1), modulus=1.0)
    tz, tw = np.array([2.0]), np.array([0.0])
    t = tseng_block_step(identity, ZeroOperator(), WholeSpace(), 0.5, tz, tw)
    np.testing.assert_allclose(t.x, [1.0])
    np.testing.assert_allclose(t.y, [1.0])
    assert t.eps == 0.0
    e = t.lam * t.y + t.x - tz
    assert np.linalg.norm(e) == pytest.approx(0.5 * np.linalg.norm(tz - t.x))

    skew = LinearForward(np.array([[0.0, 1.0], [-1.0, 0.0]]), modulus=1.0)
    tz2, tw2 = np.array([1.0, 0.0]), np.zeros(2)
    t = tseng_block_step(skew, ZeroOperator(), WholeSpace(), 0.5, tz2, tw2)
    np.testing.assert_allclose(t.x, [1.0, 0.5])
    np.testing.assert_allclose(t.y, [0.5, -1.0])
    assert error_criterion(t, tz2, tw2, 0.5).ok


def test_variant_steps_pass_the_inclusion_audits(rng):
    A = rng.standard_normal((6, 3))
    b = rng.standard_normal(6)
    F = QuadraticGradient(A, b)
    M, q = F.affine_data()
    block = OperatorBlock(T=AffineOperator(M, q), F=F, B=ZeroOperator(), C=WholeSpace())
    sigma = 0.6
    for _ in range(20):
        tz, tw = rng.standard_normal(3), rng.standard_normal(3)
        lam = variant_stepsize(FB, sigma, F.modulus)
        t = fb_block_step(F, block.B, block.C, lam, tz, tw)
        assert error_criterion(t, tz, tw, sigma).ok
        assert fb_inclusion_audit(block, t, tz, tw)

        lam = variant_stepsize(TSENG, sigma, F.modulus)
        t = tseng_block_step(F, block.B, block.C, lam, tz, tw)
        assert error_criterion(t, tz, tw, sigma).ok
        assert tseng_inclusion_audit(block, t)


def test_compatibility_gate(small_lasso):
    skew = make_skew_saddle(4, seed=0)
    with pytest.raises(VariantCompatibilityError):
        check_compatibility(FB, skew.blocks, skew.block_dims())
    check_compatibility(TSENG, skew.blocks, skew.block_dims())
    check_compatibility(FB, small_lasso.blocks, small_lasso.block_dims())
    check_compatibility(FB, skew.blocks, skew.block_dims(), allow_unverified=True)


def test_gate_catches_a_false_declaration():
    lying = LinearForward(3.0 * np.eye(2), modulus=1.0, regularity="cocoercive")
    block = OperatorBlock(F=lying)
    with pytest.raises(VariantCompatibilityError):
        check_compatibility(FB, [block], [2])


def test_make_inner_solver():
    assert isinstance(make_inner_solver("generic"), ExactProxSolver)
    assert isinstance(make_inner_solver("generic", inexact=True), PerturbedProxSolver)
    solver = make_inner_solver("tseng")
    assert isinstance(solver, VariantInnerSolver)
    assert solver.skips_eps_certificate()
    assert not make_inner_solver("fb").skips_eps_certificate()
    with pytest.raises(ValueError):
        make_inner_solver("fb", inexact=True)


CONVERGENCE_RUNS = [
    ("affine", "generic"),
    ("affine", "fb"),
    ("affine", "tseng"),
    ("lasso", "fb"),
    ("lasso", "tseng"),
    ("fused", "fb"),
    ("fused", "tseng"),
    ("skew", "tseng"),
]


@pytest.mark.parametrize("name,variant", CONVERGENCE_RUNS)
def test_variant_returns_near_the_oracle(name, variant):
    problem = generate_problem(name, **VerifyConfig().problems[name])
    cfg = SolverConfig(max_iter=20000, rho_tol=1e-6)
    result = solve(problem, cfg, make_inner_solver(variant))
    assert result.solution.status == "returned"
    target = problem.oracle.project(problem.initial_point(), cfg.metric())
    assert np.linalg.norm(result.solution.z - target.z) <= 1e-4
    inputs = result.certificate_inputs
    assert inputs.lambda_lower <= inputs.lambda_upper
    assert inputs.skip_eps == (variant == "tseng")


def test_variant_lambda_bounds_cover_every_block(small_lasso):
    cfg = SolverConfig(sigma=0.5, lambda_value=2.0)
    L = small_lasso.blocks[1].F.modulus
    assert VariantInnerSolver(TSENG).lambda_bounds(small_lasso.blocks, cfg) == pytest.approx(
        (min(0.5 / L, 2.0), max(0.5 / L, 2.0)))
    assert VariantInnerSolver(FB).lambda_bounds(small_lasso.blocks[1:], cfg) == pytest.approx(
        (0.5 / L, 0.5 / L))


class _ShiftedZero(ZeroOperator):
    """Claims to be the zero operator but its resolvent moves the point."""

    def resolvent(self, lam, u):
        return np.asarray(u, dtype=float) + 1.0


@pytest.mark.parametrize("kind", [FB, TSENG])
def test_broken_backward_step_is_a_contract_error(kind):
    F = LinearForward(np.eye(2), modulus=1.0)
    block = OperatorBlock(F=F, B=_ShiftedZero(), C=WholeSpace())
    solver = VariantInnerSolver(kind)
    lam = variant_stepsize(kind, 0.5, 1.0)
    with pytest.raises(InnerSolverContractError):
        solver.solve_block(block, lam, np.array([1.0, 2.0]), np.zeros(2), 0.5)


def test_variant_steps_skip_the_subgradient_test_on_split_blocks(small_lasso):
    result = solve(small_lasso, SolverConfig(max_iter=50, rho_tol=0.0), make_inner_solver("fb"))
    # only the l1 block is a resolvent step
    assert all(len(r.subgradient_slack) == 1 for r in result.trace)
