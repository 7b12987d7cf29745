"""
Seeded test problems with solution oracles that do not go through the solver.

Each generator returns a two-block ProblemInstance together with an oracle
computed by closed forms, dense linear algebra, exhaustive active-set
enumeration, or a reference first-order method polished on its active set.
"""

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space, orth

from splitting.errors import UnsupportedCheckError
from splitting.operator_kit import (
    LIPSCHITZ,
    AffineOperator,
    AffineSubspaceNormalCone,
    BoxNormalCone,
    L1Subdifferential,
    LinearForward,
    OperatorBlock,
    QuadraticGradient,
    WholeSpace,
    ZeroOperator,
    soft_threshold,
)
from splitting.product_space import DenseLinearMap, GammaMetric, LinearOpFamily, ProductPoint
from splitting.separator import BlockTriple

ENUMERATION_MAX_DIM = 8
REFERENCE_TOL = 1e-12
REFERENCE_MAX_ITER = 1_000_000


# ---------------------------
# Oracles
# ---------------------------

@dataclass
class ProblemOracle:
    """A known point of the extended solution set, unique unless flagged."""
    z_star: np.ndarray
    w_star: Tuple[np.ndarray, ...]
    unique: bool = True
    kind: str = "singleton"

    def point(self) -> ProductPoint:
        return ProductPoint(self.z_star, self.w_star)

    def project(self, p0: ProductPoint, metric: GammaMetric) -> ProductPoint:
        if not self.unique:
            raise UnsupportedCheckError("solution set is not a singleton; no projection oracle")
        return self.point()

    def distance(self, p0: ProductPoint, metric: GammaMetric) -> Optional[float]:
        if not self.unique:
            return None
        return metric.distance(self.project(p0, metric), p0)

    def sample_points(self, count: int, seed: int = 0) -> List[ProductPoint]:
        return [self.point()]

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "unique": self.unique, "z_star": self.z_star.tolist(),
                "w_star": [w.tolist() for w in self.w_star]}


class AffineFeasibilityOracle(ProblemOracle):
    """
    S_e = (V1 cap V2) x (R1 cap R2) with R_i = range(A_i^T); the projection
    of p0 splits into an affine projection for z and a linear one for w.
    """

    def __init__(self, A1: np.ndarray, b1: np.ndarray, A2: np.ndarray, b2: np.ndarray):
        A = np.vstack([A1, A2])
        b = np.concatenate([b1, b2])
        self._A, self._b = A, b
        self._A_pinv = np.linalg.pinv(A)
        Q1, Q2 = orth(A1.T), orth(A2.T)
        kernel = null_space(np.hstack([Q1, -Q2]))
        if kernel.size:
            self._W = orth(Q1 @ kernel[: Q1.shape[1]])
        else:
            self._W = np.zeros((A.shape[1], 0))
        z_star = self.project_z(np.zeros(A.shape[1]))
        super().__init__(z_star=z_star, w_star=(np.zeros(A.shape[1]),), unique=False, kind="affine")

    def project_z(self, z: np.ndarray) -> np.ndarray:
        return z - self._A_pinv @ (self._A @ z - self._b)

    def project_w(self, w: np.ndarray) -> np.ndarray:
        return self._W @ (self._W.T @ w)

    def project(self, p0: ProductPoint, metric: GammaMetric) -> ProductPoint:
        # the metric weights z and w separately, so the blocks project independently
        return ProductPoint(self.project_z(p0.z), (self.project_w(p0.w[0]),))

    def distance(self, p0: ProductPoint, metric: GammaMetric) -> float:
        return metric.distance(self.project(p0, metric), p0)

    def sample_points(self, count: int, seed: int = 0) -> List[ProductPoint]:
        rng = np.random.default_rng(seed)
        dim = self._A.shape[1]
        return [
            ProductPoint(self.project_z(3.0 * rng.standard_normal(dim)),
                         (self.project_w(3.0 * rng.standard_normal(dim)),))
            for _ in range(count)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind}


# ---------------------------
# Instances
# ---------------------------

@dataclass
class ProblemInstance:
    name: str
    family: LinearOpFamily
    blocks: List[OperatorBlock]
    oracle: Optional[ProblemOracle] = None
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.family.n

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.family.dims

    def block_dims(self) -> List[int]:
        return [self.family.block_dim(i) for i in range(1, self.n + 1)]

    def initial_point(self) -> ProductPoint:
        return ProductPoint.zeros(self.dims)

    def oracle_triples(self, lam: float = 1.0) -> List[BlockTriple]:
        """Consistent triples (G_i z*, w_i*, 0) with w_n implied."""
        if self.oracle is None:
            raise UnsupportedCheckError(f"problem '{self.name}' has no oracle")
        z = self.oracle.z_star
        duals = list(self.oracle.w_star)
        w_n = -sum((self.family.adjoint(i, w) for i, w in enumerate(duals, start=1)),
                   np.zeros(self.family.dim0))
        duals.append(w_n)
        return [BlockTriple(self.family.apply(i, z), w, 0.0, lam)
                for i, w in enumerate(duals, start=1)]

    def objective(self, z: np.ndarray) -> float:
        """sum f_i(G_i z) when every operator is a subdifferential with known f."""
        total = 0.0
        for i, block in enumerate(self.blocks, start=1):
            pair = block.T.conjugate_pair if block.T is not None else None
            if pair is None:
                raise UnsupportedCheckError(f"block {i} of '{self.name}' has no objective")
            total += pair.value(self.family.apply(i, z))
        return total


def _identity_family(dim: int) -> LinearOpFamily:
    return LinearOpFamily([DenseLinearMap(np.eye(dim), norm_hint=1.0)], dim)


# ---------------------------
# Affine feasibility
# ---------------------------

def affine_feasibility_from_data(A1: Any, b1: Any, A2: Any, b2: Any,
                                 name: str = "affine") -> ProblemInstance:
    T1 = AffineSubspaceNormalCone(A1, b1)
    T2 = AffineSubspaceNormalCone(A2, b2)
    dim = T1.A.shape[1]
    return ProblemInstance(
        name=name,
        family=_identity_family(dim),
        blocks=[OperatorBlock(T=T1, label="N_V1"), OperatorBlock(T=T2, label="N_V2")],
        oracle=AffineFeasibilityOracle(T1.A, T1.b, T2.A, T2.b),
    )


def make_affine_feasibility(dim: int, seed: int = 0) -> ProblemInstance:
    """Two random affine subspaces sharing one constraint row, so both the
    z-part and the w-part of the solution set are nontrivial."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    rng = np.random.default_rng(seed)
    rows = max(1, dim // 2)
    A1 = rng.standard_normal((rows, dim))
    A2 = rng.standard_normal((rows, dim))
    A2[0] = A1[0]
    x_bar = rng.standard_normal(dim)
    problem = affine_feasibility_from_data(A1, A1 @ x_bar, A2, A2 @ x_bar)
    problem.params = {"generator": "affine", "dim": dim, "seed": seed}
    return problem


# ---------------------------
# LASSO
# ---------------------------

def lasso_kkt_residual(A: np.ndarray, b: np.ndarray, mu: float, z: np.ndarray) -> float:
    grad = A.T @ (A @ z - b)
    return float(np.linalg.norm(z - soft_threshold(z - grad, mu)))


def reference_lasso(A: np.ndarray, b: np.ndarray, mu: float,
                    tol: float = REFERENCE_TOL,
                    max_iter: int = REFERENCE_MAX_ITER) -> np.ndarray:
    """Accelerated proximal gradient, then an exact solve on the detected support."""
    cols = A.shape[1]
    L = float(np.linalg.norm(A, 2)) ** 2 or 1.0
    z = np.zeros(cols)
    y = z.copy()
    t = 1.0
    for _ in range(max_iter):
        z_new = soft_threshold(y - A.T @ (A @ y - b) / L, mu / L)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        done = np.linalg.norm(z_new - z) <= tol * (1.0 + np.linalg.norm(z_new))
        z, t = z_new, t_new
        if done:
            break
    polished = _polish_lasso(A, b, mu, z)
    if polished is not None and (lasso_kkt_residual(A, b, mu, polished)
                                 <= lasso_kkt_residual(A, b, mu, z)):
        return polished
    return z


def _polish_lasso(A: np.ndarray, b: np.ndarray, mu: float,
                  z: np.ndarray) -> Optional[np.ndarray]:
    support = np.abs(z) > 1e-9 * max(1.0, float(np.max(np.abs(z), initial=0.0)))
    out = np.zeros_like(z)
    if support.any():
        signs = np.sign(z[support])
        A_s = A[:, support]
        sol, *_ = np.linalg.lstsq(A_s.T @ A_s, A_s.T @ b - mu * signs, rcond=None)
        if np.any(np.sign(sol) != signs):
            return None
        out[support] = sol
    grad = A.T @ (A @ out - b)
    if np.any(np.abs(grad[~support]) > mu * (1.0 + 1e-9)):
        return None
    return out


def lasso_from_data(A: Any, b: Any, mu: float, name: str = "lasso") -> ProblemInstance:
    A = np.atleast_2d(np.array(A, dtype=float))
    b = np.array(b, dtype=float).reshape(-1)
    cols = A.shape[1]
    F = QuadraticGradient(A, b, modulus=float(np.linalg.norm(A, 2)) ** 2 or 1.0)
    M, q = F.affine_data()
    z_star = reference_lasso(A, b, mu)
    w_star = -F.eval(z_star)
    return ProblemInstance(
        name=name,
        family=_identity_family(cols),
        blocks=[
            OperatorBlock(T=L1Subdifferential(mu), label="l1"),
            OperatorBlock(T=AffineOperator(M, q), F=F, B=ZeroOperator(), C=WholeSpace(),
                          label="least_squares"),
        ],
        oracle=ProblemOracle(z_star=z_star, w_star=(w_star,)),
    )


def make_lasso(rows: int, cols: int, mu: float, seed: int = 0) -> ProblemInstance:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be at least 1")
    if not mu > 0:
        raise ValueError("mu must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, cols)) / np.sqrt(rows)
    x_true = rng.standard_normal(cols) * (rng.random(cols) < 0.5)
    b = A @ x_true + 0.05 * rng.standard_normal(rows)
    problem = lasso_from_data(A, b, mu)
    problem.params = {"generator": "lasso", "rows": rows, "cols": cols, "mu": mu, "seed": seed}
    return problem


# ---------------------------
# Fused LASSO
# ---------------------------

def difference_matrix(cols: int) -> np.ndarray:
    D = np.zeros((cols - 1, cols))
    idx = np.arange(cols - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def reference_fused(A: np.ndarray, b: np.ndarray, mu: float, rho: float = 1.0,
                    tol: float = REFERENCE_TOL,
                    max_iter: int = REFERENCE_MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """ADMM on Dz = s with an exact z-update, then an equality-constrained
    polish on the detected jump pattern. Returns (z*, w1*)."""
    cols = A.shape[1]
    D = difference_matrix(cols)
    K_inv = np.linalg.inv(A.T @ A + rho * D.T @ D)
    Atb = A.T @ b
    s = np.zeros(cols - 1)
    u = np.zeros(cols - 1)
    z = np.zeros(cols)
    for _ in range(max_iter):
        z = K_inv @ (Atb + rho * D.T @ (s - u))
        Dz = D @ z
        s_old = s
        s = soft_threshold(Dz + u, mu / rho)
        u = u + Dz - s
        primal = np.linalg.norm(Dz - s)
        dual = rho * np.linalg.norm(D.T @ (s - s_old))
        if primal <= tol * (1.0 + np.linalg.norm(Dz)) and dual <= tol * (1.0 + np.linalg.norm(Atb)):
            break
    polished = _polish_fused(A, b, mu, z, D)
    if polished is not None:
        z = polished
    return z, _fused_dual(A, b, D, z)


def _fused_dual(A: np.ndarray, b: np.ndarray, D: np.ndarray, z: np.ndarray) -> np.ndarray:
    # D^T w1 = -grad f(z); D has full row rank
    grad = A.T @ (A @ z - b)
    return -np.linalg.solve(D @ D.T, D @ grad)


def _polish_fused(A: np.ndarray, b: np.ndarray, mu: float, z: np.ndarray,
                  D: np.ndarray) -> Optional[np.ndarray]:
    d = D @ z
    jumps = np.abs(d) > 1e-7 * (1.0 + float(np.max(np.abs(d), initial=0.0)))
    signs = np.sign(d[jumps])
    D_flat = D[~jumps]
    cols = A.shape[1]
    # KKT system of min 1/2||Az-b||^2 + mu s^T D_J z  s.t.  D_flat z = 0
    m = D_flat.shape[0]
    kkt = np.block([[A.T @ A, D_flat.T], [D_flat, np.zeros((m, m))]])
    rhs = np.concatenate([A.T @ b - mu * D[jumps].T @ signs, np.zeros(m)])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    candidate = sol[:cols]
    if np.any(np.sign(D[jumps] @ candidate) != signs):
        return None
    w1 = _fused_dual(A, b, D, candidate)
    grad = A.T @ (A @ candidate - b)
    if np.linalg.norm(D.T @ w1 + grad) > 1e-8 * (1.0 + np.linalg.norm(grad)):
        return None
    if np.any(np.abs(w1) > mu * (1.0 + 1e-8)):
        return None
    if np.any(np.abs(w1[jumps] - mu * signs) > 1e-8 * (1.0 + mu)):
        return None
    return candidate


def fused_from_data(A: Any, b: Any, mu: float, name: str = "fused") -> ProblemInstance:
    A = np.atleast_2d(np.array(A, dtype=float))
    b = np.array(b, dtype=float).reshape(-1)
    cols = A.shape[1]
    if cols < 2:
        raise ValueError("fused problems need at least 2 columns")
    D = difference_matrix(cols)
    F = QuadraticGradient(A, b, modulus=float(np.linalg.norm(A, 2)) ** 2 or 1.0)
    M, q = F.affine_data()
    z_star, w1 = reference_fused(A, b, mu)
    return ProblemInstance(
        name=name,
        family=LinearOpFamily([DenseLinearMap(D, norm_hint=float(np.linalg.norm(D, 2)))], cols),
        blocks=[
            OperatorBlock(T=L1Subdifferential(mu), label="l1_of_differences"),
            OperatorBlock(T=AffineOperator(M, q), F=F, B=ZeroOperator(), C=WholeSpace(),
                          label="least_squares"),
        ],
        oracle=ProblemOracle(z_star=z_star, w_star=(w1,)),
    )


def make_fused(rows: int, cols: int, mu: float, seed: int = 0) -> ProblemInstance:
    if cols < 2:
        raise ValueError("cols must be at least 2")
    if not mu > 0:
        raise ValueError("mu must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, cols)) / np.sqrt(rows)
    levels = rng.standard_normal(3)
    x_true = levels[np.minimum(np.arange(cols) * 3 // cols, 2)]
    b = A @ x_true + 0.05 * rng.standard_normal(rows)
    problem = fused_from_data(A, b, mu)
    problem.params = {"generator": "fused", "rows": rows, "cols": cols, "mu": mu, "seed": seed}
    return problem


# ---------------------------
# Skew saddle (box-constrained monotone linear complementarity)
# ---------------------------

@dataclass
class EnumerationResult:
    z: np.ndarray
    unique: bool
    candidates: int


def solve_box_vi_by_enumeration(M: np.ndarray, q: np.ndarray, lower: np.ndarray,
                                upper: np.ndarray, tol: float = 1e-9) -> EnumerationResult:
    """
    Find z in the box with -(M z + q) in N_box(z) by trying every
    (lower, free, upper) pattern. Returns the minimum-norm solution found and
    whether the solution set is a single point.
    """
    dim = q.size
    if dim > ENUMERATION_MAX_DIM:
        raise UnsupportedCheckError(f"enumeration limited to dim <= {ENUMERATION_MAX_DIM}")
    found: List[np.ndarray] = []
    ambiguous = False
    for pattern in itertools.product((-1, 0, 1), repeat=dim):
        pat = np.array(pattern)
        if np.any((pat == -1) & ~np.isfinite(lower)) or np.any((pat == 1) & ~np.isfinite(upper)):
            continue
        z = np.zeros(dim)
        z[pat == -1] = lower[pat == -1]
        z[pat == 1] = upper[pat == 1]
        free = pat == 0
        singular = False
        if free.any():
            fixed = ~free
            M_ff = M[np.ix_(free, free)]
            rhs = -(q[free] + M[np.ix_(free, fixed)] @ z[fixed])
            sol, *_ = np.linalg.lstsq(M_ff, rhs, rcond=None)
            if np.linalg.norm(M_ff @ sol - rhs) > tol * (1.0 + np.linalg.norm(rhs)):
                continue
            singular = np.linalg.matrix_rank(M_ff) < free.sum()
            z[free] = sol
        if np.any(z < lower - tol) or np.any(z > upper + tol):
            continue
        Fz = M @ z + q
        if np.any(Fz[pat == -1] < -tol) or np.any(Fz[pat == 1] > tol):
            continue
        ambiguous = ambiguous or singular
        if not any(np.linalg.norm(z - other) <= 1e-9 for other in found):
            found.append(z)
    if not found:
        raise UnsupportedCheckError("enumeration found no solution")
    best = min(found, key=lambda v: float(np.linalg.norm(v)))
    unique = _strictly_complementary(M, q, lower, upper, best, tol) or (
        len(found) == 1 and not ambiguous)
    return EnumerationResult(z=best, unique=unique, candidates=len(found))


def _strictly_complementary(M: np.ndarray, q: np.ndarray, lower: np.ndarray,
                            upper: np.ndarray, z: np.ndarray, tol: float) -> bool:
    """Strict complementarity plus a nonsingular free block pins the solution down."""
    Fz = M @ z + q
    free = (z > lower + tol) & (z < upper - tol)
    if np.any(np.abs(Fz[~free]) <= tol):
        return False
    if not free.any():
        return True
    return bool(np.linalg.matrix_rank(M[np.ix_(free, free)]) == free.sum())


def skew_saddle_from_data(M: Any, q: Any, lower: Any, upper: Any,
                          name: str = "skew") -> ProblemInstance:
    M = np.atleast_2d(np.array(M, dtype=float))
    q = np.array(q, dtype=float).reshape(-1)
    lower = np.array(lower, dtype=float).reshape(-1)
    upper = np.array(upper, dtype=float).reshape(-1)
    dim = q.size
    L = float(np.linalg.norm(M, 2)) or 1.0
    F = LinearForward(M, q, modulus=L, regularity=LIPSCHITZ)
    oracle: Optional[ProblemOracle] = None
    if dim <= ENUMERATION_MAX_DIM:
        found = solve_box_vi_by_enumeration(M, q, lower, upper)
        oracle = ProblemOracle(z_star=found.z, w_star=(-(M @ found.z + q),), unique=found.unique)
    return ProblemInstance(
        name=name,
        family=_identity_family(dim),
        blocks=[
            OperatorBlock(T=BoxNormalCone(lower, upper), label="box"),
            OperatorBlock(T=AffineOperator(M, q), F=F, B=ZeroOperator(), C=WholeSpace(),
                          label="skew_field"),
        ],
        oracle=oracle,
    )


def make_skew_saddle(dim: int, seed: int = 0) -> ProblemInstance:
    """
    Box [-1, 1]^dim with F(z) = M z + q, M skew. The solution is planted with
    strict complementarity and an even-sized free set whose skew block is
    nonsingular, which makes it unique.
    """
    if dim < 2 or dim % 2:
        raise ValueError("dim must be a positive even number")
    rng = np.random.default_rng(seed)
    n_free = 2 * (dim // 4)
    while True:
        B = rng.standard_normal((dim, dim))
        M = B - B.T
        free = np.zeros(dim, dtype=bool)
        free[rng.permutation(dim)[:n_free]] = True
        if n_free == 0 or np.linalg.cond(M[np.ix_(free, free)]) < 1e8:
            break
    z_star = np.where(free, rng.uniform(-0.5, 0.5, dim), rng.choice([-1.0, 1.0], dim))
    # F(z*) vanishes on free coordinates and points into the box at active ones
    v = np.where(free, 0.0, -z_star * rng.uniform(0.5, 1.5, dim))
    q = v - M @ z_star
    ones = np.ones(dim)
    problem = skew_saddle_from_data(M, q, -ones, ones)
    if problem.oracle is not None and not np.allclose(problem.oracle.z_star, z_star, atol=1e-8):
        raise RuntimeError("enumeration oracle disagrees with the planted solution")
    if problem.oracle is None:
        problem.oracle = ProblemOracle(z_star=z_star, w_star=(-v,))
    problem.params = {"generator": "skew", "dim": dim, "seed": seed}
    return problem


GENERATORS: Dict[str, Callable[..., ProblemInstance]] = {
    "affine": make_affine_feasibility,
    "lasso": make_lasso,
    "fused": make_fused,
    "skew": make_skew_saddle,
}
