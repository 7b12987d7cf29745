"""
Operator oracles for the monotone inclusion 0 in sum G_i^* T_i(G_i z).

Backward oracles expose resolvents (lambda T + I)^{-1}, forward oracles expose
single-valued evaluations with a declared Lipschitz or cocoercivity modulus,
and projectable sets back the feasibility sets C_i of split blocks. All
catalog oracles are stateless, so blocks may be solved concurrently.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from splitting.errors import SplittingError, UnsupportedCheckError

MEMBERSHIP_TOL = 1e-10

KIND_SUBDIFFERENTIAL = "subdifferential"
KIND_NORMAL_CONE = "normal-cone"
KIND_AFFINE = "affine"
KIND_CUSTOM = "custom"

COCOERCIVE = "cocoercive"
LIPSCHITZ = "lipschitz"


def _vec(u: Any) -> np.ndarray:
    return np.asarray(u, dtype=float).reshape(-1)


def _bounds_to_json(values: np.ndarray) -> List[Optional[float]]:
    return [None if not np.isfinite(v) else float(v) for v in values]


def soft_threshold(u: np.ndarray, threshold: float) -> np.ndarray:
    u = _vec(u)
    return np.sign(u) * np.maximum(np.abs(u) - threshold, 0.0)


@dataclass(frozen=True)
class ConjugatePair:
    """A convex function f and its Fenchel conjugate f^*."""
    value: Callable[[np.ndarray], float]
    conjugate: Callable[[np.ndarray], float]


# ---------------------------
# Projectable sets
# ---------------------------

class ProjectableSet(ABC):
    tol: float = 1e-12

    @abstractmethod
    def project(self, u: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        ...

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...


class WholeSpace(ProjectableSet):
    def project(self, u: np.ndarray) -> np.ndarray:
        return _vec(u).copy()

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        return bool(np.all(np.isfinite(_vec(x))))

    def describe(self) -> Dict[str, Any]:
        return {"kind": "whole"}


class Box(ProjectableSet):
    """Product of intervals [lower_j, upper_j]; infinite bounds allowed."""

    def __init__(self, lower: Any, upper: Any, tol: float = 1e-12):
        self.lower = _vec(lower)
        self.upper = _vec(upper)
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have the same shape")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")
        self.tol = tol

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.clip(_vec(u), self.lower, self.upper)

    def contains(self, x: np.ndarray, tol: Optional[float] = None) -> bool:
        t = self.tol if tol is None else tol
        x = _vec(x)
        return bool(np.all(x >= self.lower - t) and np.all(x <= self.upper + t))

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": "box",
            "lower": _bounds_to_json(self.lower),
            "upper": _bounds_to_json(self.upper),
        }


# ---------------------------
# Backward (resolvent) oracles
# ---------------------------

class MonotoneOracle(ABC):
    """A maximal monotone operator reached through its resolvent."""
    kind: str = KIND_CUSTOM
    tag: str = "custom"

    @abstractmethod
    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        """Return x = (lam T + I)^{-1}(u)."""

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        """Closed-form test of v in T(x)."""
        raise UnsupportedCheckError(f"{self.tag} oracle has no membership test")

    @property
    def conjugate_pair(self) -> Optional[ConjugatePair]:
        return None

    def describe(self) -> Dict[str, Any]:
        raise UnsupportedCheckError(f"{self.tag} oracle cannot be serialized")


class ZeroOperator(MonotoneOracle):
    kind = KIND_SUBDIFFERENTIAL
    tag = "zero"

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        return _vec(u).copy()

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.linalg.norm(_vec(v)) <= tol)

    @property
    def conjugate_pair(self) -> ConjugatePair:
        return ConjugatePair(
            value=lambda x: 0.0,
            conjugate=lambda u: 0.0 if np.linalg.norm(_vec(u)) <= MEMBERSHIP_TOL else np.inf,
        )

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag}


class L1Subdifferential(MonotoneOracle):
    """T = subdifferential of mu ||.||_1; resolvent is soft-thresholding."""
    kind = KIND_SUBDIFFERENTIAL
    tag = "l1"

    def __init__(self, mu: float = 1.0):
        if not mu > 0:
            raise ValueError(f"mu must be positive, got {mu}")
        self.mu = float(mu)

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        return soft_threshold(u, lam * self.mu)

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        x, v = _vec(x), _vec(v)
        nonzero = np.abs(x) > tol
        on_support = np.abs(v[nonzero] - self.mu * np.sign(x[nonzero])) <= tol * (1 + self.mu)
        off_support = np.abs(v[~nonzero]) <= self.mu + tol
        return bool(np.all(on_support) and np.all(off_support))

    @property
    def conjugate_pair(self) -> ConjugatePair:
        mu = self.mu

        def conjugate(u: np.ndarray) -> float:
            # indicator of the infinity-norm ball of radius mu
            return 0.0 if np.max(np.abs(_vec(u)), initial=0.0) <= mu * (1 + 1e-12) else np.inf

        return ConjugatePair(value=lambda x: mu * float(np.sum(np.abs(_vec(x)))), conjugate=conjugate)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, "mu": self.mu}


class BoxNormalCone(MonotoneOracle):
    """Normal cone of a box; a halfline is a box with one infinite side."""
    kind = KIND_NORMAL_CONE
    tag = "box_normal_cone"

    def __init__(self, lower: Any, upper: Any):
        self.box = Box(lower, upper)

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        return self.box.project(u)

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        x, v = _vec(x), _vec(v)
        if not self.box.contains(x, tol):
            return False
        at_lower = x <= self.box.lower + tol
        at_upper = x >= self.box.upper - tol
        ok = np.where(at_lower & at_upper, True,
                      np.where(at_lower, v <= tol,
                               np.where(at_upper, v >= -tol, np.abs(v) <= tol)))
        return bool(np.all(ok))

    @property
    def conjugate_pair(self) -> ConjugatePair:
        lower, upper = self.box.lower, self.box.upper
        box = self.box

        def support(u: np.ndarray) -> float:
            u = _vec(u)
            total = 0.0
            for uj, lj, hj in zip(u, lower, upper):
                bound = hj if uj > 0 else lj
                if uj == 0:
                    continue
                if not np.isfinite(bound):
                    return np.inf
                total += uj * bound
            return total

        return ConjugatePair(value=lambda x: 0.0 if box.contains(x) else np.inf, conjugate=support)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, **{k: v for k, v in self.box.describe().items() if k != "kind"}}


class AffineSubspaceNormalCone(MonotoneOracle):
    """Normal cone of V = {x : A x = b}; resolvent is the projection onto V."""
    kind = KIND_NORMAL_CONE
    tag = "affine_normal_cone"

    def __init__(self, A: Any, b: Any):
        self.A = np.atleast_2d(np.array(A, dtype=float))
        self.b = _vec(b)
        if self.A.shape[0] != self.b.size:
            raise ValueError(f"A has {self.A.shape[0]} rows but b has {self.b.size} entries")
        self._pinv = np.linalg.pinv(self.A)

    def project(self, u: np.ndarray) -> np.ndarray:
        u = _vec(u)
        return u - self._pinv @ (self.A @ u - self.b)

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        return self.project(u)

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        x, v = _vec(x), _vec(v)
        scale = 1.0 + float(np.linalg.norm(v))
        in_set = np.linalg.norm(self.A @ x - self.b) <= tol * (1.0 + np.linalg.norm(self.b))
        in_range = np.linalg.norm(v - self._pinv @ (self.A @ v)) <= tol * scale
        return bool(in_set and in_range)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, "A": self.A.tolist(), "b": self.b.tolist()}


class AffineOperator(MonotoneOracle):
    """T(x) = M x + q with M + M^T positive semidefinite."""
    kind = KIND_AFFINE
    tag = "affine"

    def __init__(self, M: Any, q: Any = None):
        self.M = np.atleast_2d(np.array(M, dtype=float))
        dim = self.M.shape[0]
        self.q = np.zeros(dim) if q is None else _vec(q)
        sym = 0.5 * (self.M + self.M.T)
        min_eig = float(np.min(np.linalg.eigvalsh(sym))) if dim else 0.0
        if min_eig < -1e-10 * max(1.0, float(np.linalg.norm(self.M, 2))):
            raise ValueError(f"affine operator is not monotone (min eig {min_eig:.3e})")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.M @ _vec(x) + self.q

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        system = lam * self.M + np.eye(self.M.shape[0])
        return np.linalg.solve(system, _vec(u) - lam * self.q)

    def contains(self, x: np.ndarray, v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        v = _vec(v)
        return bool(np.linalg.norm(v - self.evaluate(x)) <= tol * (1.0 + np.linalg.norm(v)))

    @property
    def conjugate_pair(self) -> Optional[ConjugatePair]:
        if not np.allclose(self.M, self.M.T, atol=1e-12):
            return None
        M, q = self.M, self.q
        M_pinv = np.linalg.pinv(M)

        def conjugate(u: np.ndarray) -> float:
            r = _vec(u) - q
            x = M_pinv @ r
            if np.linalg.norm(M @ x - r) > 1e-9 * (1.0 + np.linalg.norm(r)):
                return np.inf
            return 0.5 * float(r @ x)

        return ConjugatePair(
            value=lambda x: 0.5 * float(_vec(x) @ (M @ _vec(x))) + float(q @ _vec(x)),
            conjugate=conjugate,
        )

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, "M": self.M.tolist(), "q": self.q.tolist()}


class CustomOracle(MonotoneOracle):
    """Wraps a user resolvent; failures propagate as solver errors."""

    def __init__(self, resolvent_fn: Callable[[float, np.ndarray], np.ndarray],
                 kind: str = KIND_CUSTOM,
                 conjugate_pair: Optional[ConjugatePair] = None):
        self._fn = resolvent_fn
        self.kind = kind
        self._pair = conjugate_pair

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        try:
            return _vec(self._fn(lam, _vec(u)))
        except SplittingError:
            raise
        except Exception as e:
            raise SplittingError(f"custom resolvent failed: {e}") from e

    @property
    def conjugate_pair(self) -> Optional[ConjugatePair]:
        return self._pair


# ---------------------------
# Forward oracles
# ---------------------------

class ForwardOracle(ABC):
    """Single-valued monotone F with modulus L and declared regularity."""
    tag: str = "custom_forward"

    def __init__(self, modulus: float, regularity: str,
                 domain_set: Optional[ProjectableSet] = None):
        if not modulus > 0:
            raise ValueError(f"forward modulus must be positive, got {modulus}")
        if regularity not in (COCOERCIVE, LIPSCHITZ):
            raise ValueError(f"unknown regularity '{regularity}'")
        self.modulus = float(modulus)
        self.regularity = regularity
        self.domain_set = domain_set or WholeSpace()

    @abstractmethod
    def eval(self, x: np.ndarray) -> np.ndarray:
        ...

    def affine_data(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(M, q) when F(x) = M x + q, else None."""
        return None

    @property
    def conjugate_pair(self) -> Optional[ConjugatePair]:
        return None

    def describe(self) -> Dict[str, Any]:
        raise UnsupportedCheckError(f"{self.tag} forward oracle cannot be serialized")


class LinearForward(ForwardOracle):
    """F(x) = M x + q; L defaults to ||M||_2."""
    tag = "linear_forward"

    def __init__(self, M: Any, q: Any = None, modulus: Optional[float] = None,
                 regularity: Optional[str] = None,
                 domain_set: Optional[ProjectableSet] = None):
        self.M = np.atleast_2d(np.array(M, dtype=float))
        self.q = np.zeros(self.M.shape[0]) if q is None else _vec(q)
        if modulus is None:
            modulus = float(np.linalg.norm(self.M, 2)) or 1.0
        if regularity is None:
            symmetric = np.allclose(self.M, self.M.T, atol=1e-12)
            regularity = COCOERCIVE if symmetric else LIPSCHITZ
        super().__init__(modulus, regularity, domain_set)

    def eval(self, x: np.ndarray) -> np.ndarray:
        return self.M @ _vec(x) + self.q

    def affine_data(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.M, self.q

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, "M": self.M.tolist(), "q": self.q.tolist(),
                "modulus": self.modulus, "regularity": self.regularity}


class QuadraticGradient(ForwardOracle):
    """F(x) = A^T (A x - b), the gradient of 1/2 ||A x - b||^2; L = ||A||^2."""
    tag = "quadratic_gradient"

    def __init__(self, A: Any, b: Any, modulus: Optional[float] = None):
        self.A = np.atleast_2d(np.array(A, dtype=float))
        self.b = _vec(b)
        if modulus is None:
            modulus = float(np.linalg.norm(self.A, 2)) ** 2 or 1.0
        super().__init__(modulus, COCOERCIVE)
        self._gram = self.A.T @ self.A
        self._atb = self.A.T @ self.b

    def eval(self, x: np.ndarray) -> np.ndarray:
        return self.A.T @ (self.A @ _vec(x) - self.b)

    def affine_data(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._gram, -self._atb

    def objective(self, x: np.ndarray) -> float:
        r = self.A @ _vec(x) - self.b
        return 0.5 * float(r @ r)

    @property
    def conjugate_pair(self) -> ConjugatePair:
        gram, atb = self._gram, self._atb
        gram_pinv = np.linalg.pinv(gram)
        half_bb = 0.5 * float(self.b @ self.b)

        def conjugate(u: np.ndarray) -> float:
            # sup_x <u,x> - 1/2||Ax-b||^2, attained where A^T A x = u + A^T b
            rhs = _vec(u) + atb
            x = gram_pinv @ rhs
            if np.linalg.norm(gram @ x - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
                return np.inf
            return 0.5 * float(rhs @ x) - half_bb

        return ConjugatePair(value=self.objective, conjugate=conjugate)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.tag, "A": self.A.tolist(), "b": self.b.tolist(),
                "modulus": self.modulus}


# ---------------------------
# Blocks
# ---------------------------

@dataclass
class OperatorBlock:
    """
    One term of the inclusion. `T` is the full operator (for exact resolvent
    steps); `F`, `B`, `C` describe the optional split T = F + B used by the
    forward-backward and Tseng steps. The linear map is the family entry at
    the same block index.
    """
    T: Optional[MonotoneOracle] = None
    F: Optional[ForwardOracle] = None
    B: Optional[MonotoneOracle] = None
    C: Optional[ProjectableSet] = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.T is None and self.F is None:
            raise ValueError("an operator block needs a resolvent oracle T or a split (F, B, C)")
        if self.F is not None:
            self.B = self.B or ZeroOperator()
            self.C = self.C or self.F.domain_set

    @property
    def is_split(self) -> bool:
        return self.F is not None

    def resolvent(self, lam: float, u: np.ndarray) -> np.ndarray:
        if self.T is None:
            raise UnsupportedCheckError(f"block '{self.label}' exposes no resolvent of T")
        return resolvent(self.T, lam, u)


def resolvent(op: MonotoneOracle, lam: float, u: np.ndarray) -> np.ndarray:
    if not lam > 0:
        raise ValueError(f"resolvent step must be positive, got {lam}")
    return op.resolvent(lam, _vec(u))


def forward_eval(op: ForwardOracle, x: np.ndarray) -> np.ndarray:
    return op.eval(_vec(x))


def eps_subdiff_check(pair: Optional[ConjugatePair], x: np.ndarray, u: np.ndarray,
                      eps: float) -> bool:
    """True iff f(x) + f^*(u) <= <x,u> + eps (so u is an eps-subgradient)."""
    if pair is None:
        raise UnsupportedCheckError("no conjugate available for the Fenchel-Young test")
    x, u = _vec(x), _vec(u)
    gap = pair.value(x) + pair.conjugate(u) - float(x @ u)
    return bool(gap <= eps + 1e-10)


def fenchel_young_gap(pair: ConjugatePair, x: np.ndarray, u: np.ndarray) -> float:
    x, u = _vec(x), _vec(u)
    return max(pair.value(x) + pair.conjugate(u) - float(x @ u), 0.0)


def affine_enlargement_check(M: np.ndarray, q: np.ndarray, x: np.ndarray,
                             v: np.ndarray, eps: float, tol: float = 1e-10) -> bool:
    """
    Exact test of v in F^[eps](x) for monotone affine F(x) = M x + q.

    With r = v - F(x) and S the symmetric part of M, the enlargement gap
    inf_y <x - y, v - F(y)> equals -r^T S^+ r / 4 when r lies in range(S)
    and -inf otherwise.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    r = _vec(v) - (M @ _vec(x) + _vec(q))
    sym = 0.5 * (M + M.T)
    sym_pinv = np.linalg.pinv(sym)
    d = sym_pinv @ r
    if np.linalg.norm(sym @ d - r) > 1e-8 * (1.0 + np.linalg.norm(r)):
        return False
    return bool(0.25 * float(r @ d) <= eps + tol)


# ---------------------------
# Randomized audits
# ---------------------------

@dataclass
class ForwardAudit:
    cocoercive_ok: bool
    lipschitz_ok: bool
    worst_cocoercive_slack: float
    worst_lipschitz_slack: float

    def supports(self, regularity: str) -> bool:
        return self.cocoercive_ok if regularity == COCOERCIVE else self.lipschitz_ok


def audit_forward(op: ForwardOracle, dim: int, n_pairs: int = 1000, seed: int = 0,
                  scale: float = 1.0, tol: float = 1e-10) -> ForwardAudit:
    """Sample cocoercivity and Lipschitz continuity with the declared modulus."""
    rng = np.random.default_rng(seed)
    L = op.modulus
    worst_co, worst_lip = np.inf, np.inf
    for _ in range(n_pairs):
        x = op.domain_set.project(scale * rng.standard_normal(dim))
        y = op.domain_set.project(scale * rng.standard_normal(dim))
        dF = op.eval(x) - op.eval(y)
        dx = x - y
        size = 1.0 + float(dx @ dx) + float(dF @ dF)
        worst_co = min(worst_co, (float(dF @ dx) - float(dF @ dF) / L) / size)
        worst_lip = min(worst_lip, (L * float(np.linalg.norm(dx)) - float(np.linalg.norm(dF))) / size)
    return ForwardAudit(
        cocoercive_ok=bool(worst_co >= -tol),
        lipschitz_ok=bool(worst_lip >= -tol),
        worst_cocoercive_slack=float(worst_co),
        worst_lipschitz_slack=float(worst_lip),
    )


@dataclass
class ResolventAudit:
    firmly_nonexpansive: bool
    monotone: bool
    worst_firm_slack: float
    worst_monotone_slack: float


def audit_resolvent(op: MonotoneOracle, dim: int, lam: float = 1.0, n_pairs: int = 200,
                    seed: int = 0, scale: float = 3.0) -> ResolventAudit:
    rng = np.random.default_rng(seed)
    worst_firm, worst_mono = np.inf, np.inf
    for _ in range(n_pairs):
        u = scale * rng.standard_normal(dim)
        v = scale * rng.standard_normal(dim)
        ju, jv = resolvent(op, lam, u), resolvent(op, lam, v)
        dj = ju - jv
        worst_firm = min(worst_firm, float(dj @ (u - v)) - float(dj @ dj))
        yu, yv = (u - ju) / lam, (v - jv) / lam
        worst_mono = min(worst_mono, float(dj @ (yu - yv)))
    return ResolventAudit(
        firmly_nonexpansive=bool(worst_firm >= -1e-10),
        monotone=bool(worst_mono >= -1e-10),
        worst_firm_slack=float(worst_firm),
        worst_monotone_slack=float(worst_mono),
    )
