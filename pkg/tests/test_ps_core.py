import math

import numpy as np
import pytest

from splitting.diagnostics import audit_trace
from splitting.errors import InnerSolverContractError
from splitting.operator_kit import L1Subdifferential, OperatorBlock, ZeroOperator, eps_subdiff_check
from splitting.pipeline import RunSpec, VerifyConfig, audit_run, run_solve
from splitting.problems import GENERATORS, make_affine_feasibility
from splitting.product_space import LinearOpFamily, ProductPoint
from splitting.ps_core import (
    STATUS_MAX_ITER,
    STATUS_RETURNED,
    ExactProxSolver,
    InnerSolver,
    PerturbedProxSolver,
    Schedule,
    SolverConfig,
    SolverState,
    error_criterion,
    exact_prox_inner,
    extrapolate,
    return_condition,
    solve,
)
from splitting.separator import BlockTriple


def test_extrapolation_example():
    family = LinearOpFamily([], 1)
    state = SolverState(k=3, p_prev=ProductPoint([0.0], ()), p_curr=ProductPoint([2.0], ()),
                        p0=ProductPoint([1.0], ()))
    p_hat, p_tilde, w_n = extrapolate(state, 0.5, 0.1, family)
    np.testing.assert_allclose(p_hat.z, [3.0])
    np.testing.assert_allclose(p_tilde.z, [3.2])
    np.testing.assert_allclose(w_n, [0.0])


def test_extrapolation_rejects_negative_coefficients(scalar_family):
    p = ProductPoint.zeros(scalar_family.dims)
    with pytest.raises(ValueError):
        extrapolate(SolverState.initial(p), -0.1, 0.0, scalar_family)


def test_error_criterion_example():
    t = BlockTriple([1.0], [1.2], 0.0, 1.0)
    tz, tw = np.array([2.0]), np.array([0.0])
    check = error_criterion(t, tz, tw, 0.2)
    assert check.lhs == pytest.approx(0.04)
    assert check.rhs == pytest.approx(0.04 * 2.44)
    assert check.ok
    assert not error_criterion(t, tz, tw, 0.1).ok
    assert not error_criterion(BlockTriple([1.0], [1.2], 2.0, 1.0), tz, tw, 0.99).ok


def test_exact_steps_meet_the_criterion_with_zero_sigma():
    block = OperatorBlock(T=L1Subdifferential(1.0))
    t = exact_prox_inner(block, 1.0, np.array([2.0]), np.array([0.0]))
    np.testing.assert_allclose(t.x, [1.0])
    np.testing.assert_allclose(t.y, [1.0])
    assert t.eps == 0.0
    assert error_criterion(t, np.array([2.0]), np.array([0.0]), 0.0).ok

    t = exact_prox_inner(OperatorBlock(T=ZeroOperator()), 2.0, np.array([1.0]), np.array([3.0]))
    np.testing.assert_allclose(t.x, [7.0])
    np.testing.assert_allclose(t.y, [0.0])


def test_return_condition(scalar_family):
    triples = [BlockTriple([0.5], [1.0], 0.1, 1.0), BlockTriple([0.5], [-1.0], 0.1, 1.0)]
    triggered, res = return_condition(triples, scalar_family, 0.1)
    assert not triggered
    assert res.dual == pytest.approx(1.0)
    triggered, _ = return_condition(triples, scalar_family, 1.0)
    assert triggered


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(sigma=1.0)
    with pytest.raises(ValueError):
        SolverConfig(gamma=0.0)
    with pytest.raises(ValueError):
        SolverConfig(beta_schedule=Schedule.constant(0.5))
    cfg = SolverConfig(beta_schedule=Schedule.harmonic(2.0))
    assert cfg.beta_sched().square_sum == pytest.approx(4.0 * math.pi ** 2 / 6)
    assert cfg.echo()["beta_schedule"] == "harmonic(2.0)"


def test_start_at_solution_returns_immediately(scalar_lasso):
    cfg = SolverConfig(sigma=0.0, alpha=0.0, beta0=0.0, rho_tol=1e-9)
    result = solve(scalar_lasso, cfg, p0=scalar_lasso.oracle.point())
    assert result.solution.status == STATUS_RETURNED
    assert result.solution.iterations == 1
    np.testing.assert_allclose(result.solution.z, [1.0], atol=1e-12)
    assert result.trace[0].returned
    assert math.isnan(result.trace[0].step_norm)


def test_max_iter_status(small_lasso):
    result = solve(small_lasso, SolverConfig(max_iter=5, rho_tol=0.0))
    assert result.solution.status == STATUS_MAX_ITER
    assert result.solution.iterations == 5
    assert [r.k for r in result.trace] == [0, 1, 2, 3, 4]


CERTIFICATE_PROBLEMS = sorted(GENERATORS)


@pytest.mark.parametrize("name", CERTIFICATE_PROBLEMS)
def test_fejer_and_certificate_audit(name):
    spec = RunSpec(problem=name, solver=SolverConfig(max_iter=5000),
                   **VerifyConfig().problems[name])
    outcome = run_solve(spec)
    report = audit_run(outcome, max_k=2000)
    assert report.ok, report.flags[:5]
    for check in ("fejer_expansion", "solution_in_H", "solution_in_W", "complexity_dual",
                  "complexity_primal", "distance_bound"):
        assert check in report.checks_run
    dists = [r.dist_p0 for r in outcome.result.trace]
    assert all(b >= a - 1e-9 for a, b in zip(dists, dists[1:]))


class _RecordingSolver(PerturbedProxSolver):
    def __init__(self, seed=0):
        super().__init__(seed=seed)
        self.accepted = []

    def solve_block(self, block, lam, target_z, target_w, sigma, k=0, index=1):
        t = super().solve_block(block, lam, target_z, target_w, sigma, k=k, index=index)
        self.accepted.append((index, t))
        return t


def test_inexact_steps_at_large_sigma(small_lasso):
    cfg = SolverConfig(sigma=0.9, max_iter=2000, rho_tol=0.0)
    inner = _RecordingSolver(seed=0)
    result = solve(small_lasso, cfg, inner)
    d0 = small_lasso.oracle.distance(small_lasso.initial_point(), cfg.metric())
    report = audit_trace(result.trace, result.certificate_inputs, d0)
    assert report.ok, report.flags[:5]
    assert "eps_subgradient" in report.checks_run
    assert any(r.eps_sum > 0 for r in result.trace)
    assert all(len(r.subgradient_slack) == 2 for r in result.trace)

    l1 = small_lasso.blocks[0].T.conjugate_pair
    l1_triples = [t for index, t in inner.accepted if index == 1]
    assert len(l1_triples) == len(result.trace)
    assert any(t.eps > 0 for t in l1_triples)
    for t in l1_triples:
        assert eps_subdiff_check(l1, t.x, t.y, t.eps)


def test_audit_flags_a_false_eps(small_lasso):
    result = solve(small_lasso, SolverConfig(sigma=0.9, max_iter=50, rho_tol=0.0),
                   PerturbedProxSolver(seed=0))
    rec = result.trace[10]
    rec.subgradient_slack = (-1e-3,) + rec.subgradient_slack[1:]
    report = audit_trace(result.trace)
    assert [f.check for f in report.flags] == ["eps_subgradient"]
    assert report.flags[0].iteration == rec.k


def test_projection_never_stalls_outside_the_separator(small_lasso):
    cfg = SolverConfig(sigma=0.0, alpha=0.0, beta0=0.0, lambda_value=0.3,
                       rho_tol=1e-6, max_iter=20000)
    result = solve(small_lasso, cfg)
    assert result.solution.status == STATUS_RETURNED
    for rec in result.trace:
        if not rec.returned and rec.phi_tilde > 0:
            assert rec.step_norm > 0, rec.k


def test_runs_are_deterministic(small_lasso):
    cfg = SolverConfig(sigma=0.7, max_iter=200, rho_tol=0.0)
    first = solve(small_lasso, cfg, PerturbedProxSolver(seed=3))
    second = solve(small_lasso, cfg, PerturbedProxSolver(seed=3))
    assert [r.to_row() for r in first.trace] == [r.to_row() for r in second.trace]


def test_parallel_blocks_match_sequential(small_lasso):
    seq = solve(small_lasso, SolverConfig(sigma=0.7, max_iter=100, rho_tol=0.0),
                PerturbedProxSolver(seed=1))
    par = solve(small_lasso, SolverConfig(sigma=0.7, max_iter=100, rho_tol=0.0, parallel=True),
                PerturbedProxSolver(seed=1))
    assert [r.to_row() for r in seq.trace] == [r.to_row() for r in par.trace]


class _SloppySolver(InnerSolver):
    name = "sloppy"

    def solve_block(self, block, lam, target_z, target_w, sigma, k=0, index=1):
        return BlockTriple(target_z + 1.0, target_w, 0.0, lam)


def test_criterion_violation_is_a_contract_error(small_lasso):
    with pytest.raises(InnerSolverContractError):
        solve(small_lasso, SolverConfig(max_iter=3), _SloppySolver())


@pytest.mark.parametrize("alpha,beta0", [(0.0, 0.0), (0.3, 0.0), (0.3, 1.0)])
def test_converges_to_projection_of_p0(alpha, beta0):
    problem = make_affine_feasibility(4, seed=0)
    cfg = SolverConfig(alpha=alpha, beta0=beta0, max_iter=10000, rho_tol=1e-12)
    result = solve(problem, cfg, ExactProxSolver())
    p0 = problem.initial_point()
    target = problem.oracle.project(p0, cfg.metric())
    assert np.linalg.norm(result.state.p_curr.z - target.z) <= 1e-4
    assert np.linalg.norm(result.state.p_curr.w[0] - target.w[0]) <= 1e-4
