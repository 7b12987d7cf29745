"""
Strongly convergent inertial inexact projective splitting.

Each iteration extrapolates from the last two iterates and the anchor p0,
solves the n block subproblems up to the relative-error criterion, tests the
approximate-solution condition, and otherwise projects p0 onto the
intersection of the separator half-space H_k and the anchor half-space W_k.
"""

import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

from splitting.diagnostics import CertificateInputs, Residuals, residuals
from splitting.errors import (
    DegenerateSeparatorError,
    InfeasibleProjectionError,
    InnerSolverContractError,
    SplittingError,
)
from splitting.operator_kit import ConjugatePair, OperatorBlock, fenchel_young_gap
from splitting.product_space import (
    GammaMetric,
    LinearOpFamily,
    ProductPoint,
    implied_dual_block,
)
from splitting.projection import project_onto_intersection, anchor_halfspace
from splitting.separator import BlockTriple, Separator, build_separator
from splitting.trace import IterationRecord

STATUS_CONTINUE = "continue"
STATUS_RETURNED = "returned"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"


# ---------------------------
# Config
# ---------------------------

class Schedule:
    """k -> coefficient, with the declared sup bound and square-sum bound."""

    def __init__(self, values: Callable[[int], float], bound: float, square_sum: float,
                 name: str = "custom"):
        self.values = values
        self.bound = float(bound)
        self.square_sum = float(square_sum)
        self.name = name

    def __call__(self, k: int) -> float:
        value = float(self.values(k))
        if value < 0:
            raise ValueError(f"schedule '{self.name}' returned negative value at k={k}")
        return value

    @classmethod
    def zero(cls) -> "Schedule":
        return cls(lambda k: 0.0, 0.0, 0.0, name="zero")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        square_sum = 0.0 if value == 0 else math.inf
        return cls(lambda k: value, value, square_sum, name=f"constant({value})")

    @classmethod
    def harmonic(cls, beta0: float) -> "Schedule":
        """beta_k = beta0 / (k + 1); sum of squares is beta0^2 pi^2 / 6."""
        return cls(lambda k: beta0 / (k + 1), beta0, beta0 ** 2 * math.pi ** 2 / 6,
                   name=f"harmonic({beta0})")


class SolverConfig(BaseModel):
    sigma: float = Field(0.5, description="relative-error tolerance, 0 <= sigma < 1")
    gamma: float = Field(1.0, description="weight of the z-block in the product metric")
    alpha: float = Field(0.3, description="constant inertial coefficient alpha_k")
    beta0: float = Field(1.0, description="beta_k = beta0 / (k + 1)")
    lambda_value: float = Field(1.0, description="step size of plain resolvent blocks")
    rho_tol: float = Field(1e-8, description="approximate-solution tolerance")
    max_iter: int = 10000
    parallel: bool = False
    max_workers: int = 4
    log_every: int = 500
    alpha_schedule: Optional[Schedule] = None
    beta_schedule: Optional[Schedule] = None

    class Config:
        arbitrary_types_allowed = True

    @validator("sigma")
    def _sigma_range(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("sigma must satisfy 0 <= sigma < 1")
        return v

    @validator("gamma", "lambda_value")
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @validator("alpha", "beta0", "rho_tol")
    def _nonnegative(cls, v: float) -> float:
        if not v >= 0:
            raise ValueError("must be nonnegative")
        return v

    @validator("max_iter", "max_workers", "log_every")
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @root_validator(skip_on_failure=True)
    def _schedules_bounded(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        beta = values.get("beta_schedule")
        if beta is not None and not math.isfinite(beta.square_sum):
            raise ValueError("beta schedule must be square summable")
        return values

    def alpha_sched(self) -> Schedule:
        return self.alpha_schedule or Schedule.constant(self.alpha)

    def beta_sched(self) -> Schedule:
        return self.beta_schedule or Schedule.harmonic(self.beta0)

    def metric(self) -> GammaMetric:
        return GammaMetric(self.gamma)

    def echo(self) -> Dict[str, Any]:
        data = self.dict(exclude={"alpha_schedule", "beta_schedule"})
        data["alpha_schedule"] = self.alpha_sched().name
        data["beta_schedule"] = self.beta_sched().name
        return data


class SplittingProblem(Protocol):
    name: str
    family: LinearOpFamily
    blocks: List[OperatorBlock]


# ---------------------------
# State & results
# ---------------------------

@dataclass
class SolverState:
    k: int
    p_prev: ProductPoint
    p_curr: ProductPoint
    p0: ProductPoint
    trace: List[IterationRecord] = field(default_factory=list)
    last_triples: Tuple[BlockTriple, ...] = ()
    last_residuals: Optional[Residuals] = None

    @classmethod
    def initial(cls, p0: ProductPoint) -> "SolverState":
        return cls(k=0, p_prev=p0, p_curr=p0, p0=p0)

    def advance(self, p_next: ProductPoint) -> None:
        self.p_prev, self.p_curr = self.p_curr, p_next
        self.k += 1


@dataclass
class Solution:
    z: np.ndarray
    w: Tuple[np.ndarray, ...]
    triples: Tuple[BlockTriple, ...]
    residuals: Optional[Residuals]
    status: str
    iterations: int

    def as_point(self) -> ProductPoint:
        return ProductPoint(self.z, self.w)


@dataclass
class IterationOutcome:
    status: str
    solution: Optional[Solution] = None
    error: Optional[SplittingError] = None


@dataclass
class SolveResult:
    solution: Solution
    trace: List[IterationRecord]
    state: SolverState
    certificate_inputs: CertificateInputs


class CriterionCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


# ---------------------------
# Kernel operations
# ---------------------------

def extrapolate(state: SolverState, alpha: float, beta: float,
                f: LinearOpFamily) -> Tuple[ProductPoint, ProductPoint, np.ndarray]:
    if alpha < 0 or beta < 0:
        raise ValueError("inertial coefficients must be nonnegative")
    p_hat = state.p_curr + alpha * (state.p_curr - state.p_prev)
    p_tilde = p_hat + beta * (p_hat - state.p0)
    return p_hat, p_tilde, implied_dual_block(p_tilde, f)


def error_criterion(t: BlockTriple, target_z: np.ndarray, target_w: np.ndarray,
                    sigma: float) -> CriterionCheck:
    lam = t.lam
    e = lam * t.y + t.x - (target_z + lam * target_w)
    lhs = float(e @ e) + 2.0 * lam * t.eps
    gap_z = target_z - t.x
    gap_w = lam * (target_w - t.y)
    rhs = sigma ** 2 * (float(gap_z @ gap_z) + float(gap_w @ gap_w))
    return CriterionCheck(lhs, rhs, lhs <= rhs + 1e-12 * (1.0 + lhs + rhs))


def exact_prox_inner(block: OperatorBlock, lam: float, target_z: np.ndarray,
                     target_w: np.ndarray) -> BlockTriple:
    u = target_z + lam * target_w
    x = block.resolvent(lam, u)
    return BlockTriple(x=x, y=(u - x) / lam, eps=0.0, lam=lam)


def return_condition(blocks: Sequence[BlockTriple], f: LinearOpFamily,
                     rho: float) -> Tuple[bool, Residuals]:
    res = residuals(blocks, f)
    return res.check_approx(rho), res


# ---------------------------
# Inner solvers
# ---------------------------

class InnerSolver(ABC):
    """Produces a block triple that satisfies the relative-error criterion."""
    name = "inner"

    def step_size(self, block: OperatorBlock, cfg: SolverConfig) -> float:
        return cfg.lambda_value

    def lambda_bounds(self, blocks: Sequence[OperatorBlock],
                      cfg: SolverConfig) -> Tuple[float, float]:
        steps = [self.step_size(block, cfg) for block in blocks]
        return min(steps), max(steps)

    def skips_eps_certificate(self) -> bool:
        return False

    def lands_on_graph(self, block: OperatorBlock) -> bool:
        """True when (x, y) comes from a resolvent of block.T, so y is an eps-subgradient."""
        return True

    @abstractmethod
    def solve_block(self, block: OperatorBlock, lam: float, target_z: np.ndarray,
                    target_w: np.ndarray, sigma: float, k: int = 0,
                    index: int = 1) -> BlockTriple:
        ...


class ExactProxSolver(InnerSolver):
    name = "exact"

    def solve_block(self, block: OperatorBlock, lam: float, target_z: np.ndarray,
                    target_w: np.ndarray, sigma: float, k: int = 0,
                    index: int = 1) -> BlockTriple:
        return exact_prox_inner(block, lam, target_z, target_w)


class PerturbedProxSolver(InnerSolver):
    """
    Exact step plus a seeded perturbation, kept only if the criterion holds.

    Blocks whose operator has a conjugate pair are perturbed in x with eps set
    to the Fenchel-Young gap of (x, y); other blocks take an exact graph point
    at a mismatched step size, which leaves e != 0 and eps = 0. The
    perturbation halves until accepted and falls back to the exact step.
    """
    name = "perturbed"

    def __init__(self, seed: int = 0, strength: float = 0.5, max_halvings: int = 40):
        self.seed = seed
        self.strength = strength
        self.max_halvings = max_halvings

    def solve_block(self, block: OperatorBlock, lam: float, target_z: np.ndarray,
                    target_w: np.ndarray, sigma: float, k: int = 0,
                    index: int = 1) -> BlockTriple:
        exact = exact_prox_inner(block, lam, target_z, target_w)
        if sigma == 0.0:
            return exact
        rng = np.random.default_rng([self.seed, k, index])
        gap = np.concatenate([target_z - exact.x, lam * (target_w - exact.y)])
        radius = self.strength * sigma * float(np.linalg.norm(gap))
        if radius == 0.0:
            return exact
        pair = block.T.conjugate_pair if block.T is not None else None
        direction = rng.standard_normal(exact.x.size)
        direction /= max(float(np.linalg.norm(direction)), 1e-300)
        stretch = float(rng.uniform(0.5, 1.0))
        u = target_z + lam * target_w
        for _ in range(self.max_halvings):
            candidate = self._perturb(block, pair, exact, u, lam, radius, direction, stretch)
            if candidate is not None and error_criterion(candidate, target_z, target_w, sigma).ok:
                return candidate
            radius *= 0.5
            stretch *= 0.5
        return exact

    @staticmethod
    def _perturb(block: OperatorBlock, pair: Any, exact: BlockTriple, u: np.ndarray,
                 lam: float, radius: float, direction: np.ndarray,
                 stretch: float) -> Optional[BlockTriple]:
        if pair is not None:
            x = exact.x + radius * direction
            eps = fenchel_young_gap(pair, x, exact.y)
            if math.isfinite(eps):
                return BlockTriple(x=x, y=exact.y, eps=eps, lam=lam)
        # exact graph point of a neighbouring step: x + lam' y = u
        lam_alt = lam * (1.0 + stretch * radius / (1.0 + radius))
        x = block.resolvent(lam_alt, u)
        return BlockTriple(x=x, y=(u - x) / lam_alt, eps=0.0, lam=lam)


# ---------------------------
# Solver
# ---------------------------

class ProjectiveSplittingSolver:
    """Runs the projective splitting loop for one problem and configuration."""

    def __init__(self, cfg: Optional[SolverConfig] = None,
                 inner: Optional[InnerSolver] = None, debug: bool = False):
        self.cfg = cfg or SolverConfig()
        self.inner = inner or ExactProxSolver()
        self.debug = debug
        self.metric = self.cfg.metric()
        self.logger = self._setup_logging()
        self._pairs: Dict[int, Optional[ConjugatePair]] = {}

    def _setup_logging(self) -> logging.Logger:
        logger = logging.getLogger("ProjectiveSplittingSolver")
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)
        return logger

    def certificate_inputs(self, problem: SplittingProblem) -> CertificateInputs:
        lam_lo, lam_hi = self.inner.lambda_bounds(problem.blocks, self.cfg)
        alpha, beta = self.cfg.alpha_sched(), self.cfg.beta_sched()
        return CertificateInputs(
            n=problem.family.n,
            max_g_norm_sq=problem.family.max_norm_sq(),
            gamma=self.cfg.gamma,
            sigma=self.cfg.sigma,
            lambda_lower=lam_lo,
            lambda_upper=lam_hi,
            alpha_bar=alpha.bound,
            beta_bar=beta.bound,
            s_bar=beta.square_sum,
            skip_eps=self.inner.skips_eps_certificate(),
        )

    def _solve_blocks(self, problem: SplittingProblem, steps: Sequence[float],
                      p_tilde: ProductPoint, w_tilde_n: np.ndarray,
                      k: int) -> Tuple[List[BlockTriple], List[np.ndarray], List[np.ndarray]]:
        family = problem.family
        targets_z = [family.apply(i, p_tilde.z) for i in range(1, family.n + 1)]
        targets_w = list(p_tilde.w) + [w_tilde_n]

        def run(i: int) -> BlockTriple:
            return self.inner.solve_block(problem.blocks[i - 1], steps[i - 1],
                                          targets_z[i - 1], targets_w[i - 1],
                                          self.cfg.sigma, k=k, index=i)

        indices = range(1, family.n + 1)
        if self.cfg.parallel and family.n > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.max_workers) as pool:
                triples = list(pool.map(run, indices))
        else:
            triples = [run(i) for i in indices]
        return triples, targets_z, targets_w

    def iterate(self, state: SolverState, problem: SplittingProblem,
                watch_points: Sequence[ProductPoint] = ()) -> IterationOutcome:
        cfg, metric, family = self.cfg, self.metric, problem.family
        k = state.k
        _, p_tilde, w_tilde_n = extrapolate(state, cfg.alpha_sched()(k),
                                            cfg.beta_sched()(k), family)

        steps = [self.inner.step_size(block, cfg) for block in problem.blocks]
        triples, targets_z, targets_w = self._solve_blocks(problem, steps, p_tilde,
                                                           w_tilde_n, k)

        slacks: List[float] = []
        tilde_gap_sq = 0.0
        weighted_gap_sq = 0.0
        for i, (t, tz, tw) in enumerate(zip(triples, targets_z, targets_w), start=1):
            check = error_criterion(t, tz, tw, cfg.sigma)
            if not check.ok:
                self.logger.error(f"block {i} violated the error criterion at k={k}")
                raise InnerSolverContractError(
                    f"block {i} at k={k}: lhs {check.lhs:.6e} > rhs {check.rhs:.6e}"
                )
            slacks.append(check.slack)
            gz = float((tz - t.x) @ (tz - t.x))
            gw = float((tw - t.y) @ (tw - t.y))
            tilde_gap_sq += gz + gw
            weighted_gap_sq += gz / t.lam + t.lam * gw

        triggered, res = return_condition(triples, family, cfg.rho_tol)
        state.last_triples, state.last_residuals = tuple(triples), res
        sep = build_separator(triples, family, metric)
        record = IterationRecord(
            k=k,
            phi_tilde=sep.value(p_tilde),
            grad_norm_sq=sep.grad_norm_sq,
            res_dual=res.dual,
            res_primal_max=res.primal_max,
            eps_sum=res.eps_sum,
            dist_p0=metric.distance(state.p_curr, state.p0),
            tilde_gap_sq=tilde_gap_sq,
            weighted_gap_sq=weighted_gap_sq,
            criterion_slack=tuple(slacks),
            lambdas=tuple(steps),
            subgradient_slack=self._subgradient_slack(problem, triples),
        )
        self._watch(record, sep, state, watch_points)

        if k % cfg.log_every == 0:
            self.logger.debug(
                f"k={k} phi={record.phi_tilde:.3e} dual={res.dual:.3e} "
                f"primal={res.primal_max:.3e} eps={res.eps_sum:.3e}"
            )

        if triggered:
            record.returned = True
            state.trace.append(record)
            solution = Solution(
                z=triples[-1].x.copy(),
                w=tuple(t.y.copy() for t in triples[:-1]),
                triples=tuple(triples),
                residuals=res,
                status=STATUS_RETURNED,
                iterations=k + 1,
            )
            return IterationOutcome(STATUS_RETURNED, solution=solution)

        if sep.grad_norm_sq == 0.0:
            raise DegenerateSeparatorError(
                f"separator gradient vanished at k={k} with eps sum {res.eps_sum:.3e}"
            )

        try:
            projection = project_onto_intersection(state.p0, state.p_curr, sep, metric)
        except InfeasibleProjectionError as e:
            self.logger.error(f"projection failed at k={k}: {e}")
            state.trace.append(record)
            return IterationOutcome(STATUS_INFEASIBLE, error=e)

        p_next = projection.point
        record.step_norm = metric.distance(p_next, state.p_curr)
        record.proj_gap = metric.distance(p_next, p_tilde)
        record.dist_next = metric.distance(p_next, state.p0)
        record.projection_case = projection.case
        state.trace.append(record)
        state.advance(p_next)
        return IterationOutcome(STATUS_CONTINUE)

    def _conjugate(self, block: OperatorBlock) -> Optional[ConjugatePair]:
        key = id(block)
        if key not in self._pairs:
            self._pairs[key] = block.T.conjugate_pair if block.T is not None else None
        return self._pairs[key]

    def _subgradient_slack(self, problem: SplittingProblem,
                           triples: Sequence[BlockTriple]) -> Tuple[float, ...]:
        slacks: List[float] = []
        for block, t in zip(problem.blocks, triples):
            if not self.inner.lands_on_graph(block):
                continue
            pair = self._conjugate(block)
            if pair is None:
                continue
            gap = fenchel_young_gap(pair, t.x, t.y)
            scale = 1.0 + abs(float(t.x @ t.y)) + t.eps
            slacks.append((t.eps + 1e-10 - gap) / scale if math.isfinite(gap) else -math.inf)
        return tuple(slacks)

    def _watch(self, record: IterationRecord, sep: Separator, state: SolverState,
               watch_points: Sequence[ProductPoint]) -> None:
        if not watch_points:
            return
        W = anchor_halfspace(state.p0, state.p_curr, self.metric)
        record.watch_phi_max = max(sep.value(p) for p in watch_points)
        record.watch_w_max = max(W.value(p, self.metric) for p in watch_points)
        scale = (1.0 + math.sqrt(sep.grad_norm_sq)) * (1.0 + self.metric.norm(state.p0))
        record.watch_tol = 1e-9 * scale

    def solve(self, problem: SplittingProblem, p0: Optional[ProductPoint] = None,
              watch_points: Sequence[ProductPoint] = ()) -> SolveResult:
        family = problem.family
        p0 = p0 if p0 is not None else ProductPoint.zeros(family.dims)
        family.check_point(p0)
        if len(problem.blocks) != family.n:
            raise SplittingError(
                f"problem '{problem.name}' has {len(problem.blocks)} blocks for n={family.n}"
            )
        state = SolverState.initial(p0)
        inputs = self.certificate_inputs(problem)
        self.logger.info(
            f"solving '{problem.name}' (n={family.n}, dims={family.dims}) "
            f"with {self.inner.name} steps, sigma={self.cfg.sigma}, gamma={self.cfg.gamma}"
        )

        outcome = IterationOutcome(STATUS_CONTINUE)
        while state.k < self.cfg.max_iter:
            outcome = self.iterate(state, problem, watch_points)
            if outcome.status == STATUS_RETURNED:
                break
            if outcome.status == STATUS_INFEASIBLE:
                raise outcome.error or InfeasibleProjectionError("projection failed")

        if outcome.solution is not None:
            solution = outcome.solution
            self.logger.info(f"returned at k={state.k} (residuals {solution.residuals})")
        else:
            solution = Solution(
                z=state.p_curr.z.copy(),
                w=tuple(w.copy() for w in state.p_curr.w),
                triples=state.last_triples,
                residuals=state.last_residuals,
                status=STATUS_MAX_ITER,
                iterations=state.k,
            )
            self.logger.info(
                f"max_iter={self.cfg.max_iter} reached, final residuals {state.last_residuals}"
            )
        return SolveResult(solution=solution, trace=state.trace, state=state,
                           certificate_inputs=inputs)


def solve(problem: SplittingProblem, cfg: Optional[SolverConfig] = None,
          inner: Optional[InnerSolver] = None, p0: Optional[ProductPoint] = None,
          watch_points: Sequence[ProductPoint] = (), debug: bool = False) -> SolveResult:
    """Convenience wrapper around ProjectiveSplittingSolver."""
    return ProjectiveSplittingSolver(cfg, inner, debug=debug).solve(problem, p0, watch_points)
