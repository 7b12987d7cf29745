"""
Weighted product space H0 x H1 x ... x H_{n-1} used by projective splitting.

A point p = (z, w_1, ..., w_{n-1}) carries the primal block z and the first
n-1 dual blocks. The n-th dual block w_n = -sum G_i^* w_i is never stored;
it is recomputed from the linear family whenever it is needed.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from splitting.errors import DimensionMismatchError


def _as_vector(values: Iterable[float]) -> np.ndarray:
    vec = np.array(values, dtype=float).reshape(-1)
    vec.setflags(write=False)
    return vec


# ---------------------------
# Points & metric
# ---------------------------

@dataclass(frozen=True, eq=False)
class ProductPoint:
    """A point p = (z, w_1, ..., w_{n-1}); arrays are stored read-only."""
    z: np.ndarray
    w: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _as_vector(self.z))
        object.__setattr__(self, "w", tuple(_as_vector(block) for block in self.w))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "ProductPoint":
        if len(dims) < 1:
            raise DimensionMismatchError("dims must contain at least the z-block size")
        return cls(np.zeros(dims[0]), tuple(np.zeros(d) for d in dims[1:]))

    @classmethod
    def from_flat(cls, flat: np.ndarray, dims: Sequence[int]) -> "ProductPoint":
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != sum(dims):
            raise DimensionMismatchError(
                f"flat vector of size {flat.size} does not fit dims {tuple(dims)}"
            )
        cuts = np.cumsum(dims)[:-1]
        parts = np.split(flat, cuts)
        return cls(parts[0], tuple(parts[1:]))

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.z.size,) + tuple(block.size for block in self.w)

    def flatten(self) -> np.ndarray:
        return np.concatenate((self.z,) + self.w)

    def check_compatible(self, other: "ProductPoint") -> None:
        if self.dims != other.dims:
            raise DimensionMismatchError(
                f"product points have different block dims: {self.dims} vs {other.dims}"
            )

    def __add__(self, other: "ProductPoint") -> "ProductPoint":
        self.check_compatible(other)
        return ProductPoint(self.z + other.z, tuple(a + b for a, b in zip(self.w, other.w)))

    def __sub__(self, other: "ProductPoint") -> "ProductPoint":
        self.check_compatible(other)
        return ProductPoint(self.z - other.z, tuple(a - b for a, b in zip(self.w, other.w)))

    def __mul__(self, scalar: float) -> "ProductPoint":
        t = float(scalar)
        return ProductPoint(t * self.z, tuple(t * block for block in self.w))

    __rmul__ = __mul__

    def __neg__(self) -> "ProductPoint":
        return self * -1.0


@dataclass(frozen=True)
class GammaMetric:
    """Inner product gamma<z,z'> + sum <w_i,w_i'> on the product space."""
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def inner(self, p: ProductPoint, q: ProductPoint) -> float:
        p.check_compatible(q)
        value = self.gamma * float(np.dot(p.z, q.z))
        for a, b in zip(p.w, q.w):
            value += float(np.dot(a, b))
        return value

    def norm_sq(self, p: ProductPoint) -> float:
        return max(self.inner(p, p), 0.0)

    def norm(self, p: ProductPoint) -> float:
        return float(np.sqrt(self.norm_sq(p)))

    def distance(self, p: ProductPoint, q: ProductPoint) -> float:
        return self.norm(p - q)


def gamma_inner(p: ProductPoint, q: ProductPoint, m: GammaMetric) -> float:
    return m.inner(p, q)


def gamma_norm(p: ProductPoint, m: GammaMetric) -> float:
    return m.norm(p)


# ---------------------------
# Linear maps
# ---------------------------

class LinearMap(ABC):
    """Bounded linear map G: H0 -> Hi with adjoint access."""

    @property
    @abstractmethod
    def in_dim(self) -> int:
        ...

    @property
    @abstractmethod
    def out_dim(self) -> int:
        ...

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def adjoint_apply(self, u: np.ndarray) -> np.ndarray:
        ...

    def norm(self) -> float:
        return estimate_operator_norm(self)


class DenseLinearMap(LinearMap):
    """Dense matrix implementation; `norm_hint` skips the power iteration."""

    def __init__(self, matrix: np.ndarray, norm_hint: Optional[float] = None):
        mat = np.array(matrix, dtype=float)
        if mat.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-D matrix, got shape {mat.shape}")
        mat.setflags(write=False)
        self.matrix = mat
        self._norm = norm_hint

    @property
    def in_dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.matrix.shape[0])

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.in_dim:
            raise DimensionMismatchError(f"apply expects size {self.in_dim}, got {x.size}")
        return self.matrix @ x

    def adjoint_apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.out_dim:
            raise DimensionMismatchError(
                f"adjoint_apply expects size {self.out_dim}, got {u.size}"
            )
        return self.matrix.T @ u

    def norm(self) -> float:
        if self._norm is None:
            self._norm = estimate_operator_norm(self)
        return self._norm


def estimate_operator_norm(
    op: LinearMap, max_iter: int = 100, rtol: float = 1e-10, seed: int = 0
) -> float:
    """Power iteration on G^*G; stops early when the estimate stagnates."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        y = op.adjoint_apply(op.apply(x))
        y_norm = float(np.linalg.norm(y))
        if y_norm == 0.0:
            return 0.0
        new_estimate = float(np.sqrt(y_norm))
        x = y / y_norm
        if abs(new_estimate - estimate) <= rtol * new_estimate:
            return new_estimate
        estimate = new_estimate
    return estimate


class LinearOpFamily:
    """
    The maps G_1..G_{n-1}; G_n is the identity on H0 and is never stored.
    Block indices are 1-based, matching the block numbering of the inclusion.
    """

    def __init__(self, ops: Sequence[LinearMap], dim0: int):
        self.ops: Tuple[LinearMap, ...] = tuple(ops)
        self.dim0 = int(dim0)
        for i, op in enumerate(self.ops, start=1):
            if op.in_dim != self.dim0:
                raise DimensionMismatchError(
                    f"G_{i} has input dim {op.in_dim}, expected {self.dim0}"
                )

    @property
    def n(self) -> int:
        return len(self.ops) + 1

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.dim0,) + tuple(op.out_dim for op in self.ops)

    def block_dim(self, i: int) -> int:
        self._check_index(i)
        return self.dim0 if i == self.n else self.ops[i - 1].out_dim

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise DimensionMismatchError(f"block index {i} outside 1..{self.n}")

    def apply(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_index(i)
        if i == self.n:
            return np.asarray(x, dtype=float).reshape(-1).copy()
        return self.ops[i - 1].apply(x)

    def adjoint(self, i: int, u: np.ndarray) -> np.ndarray:
        self._check_index(i)
        if i == self.n:
            return np.asarray(u, dtype=float).reshape(-1).copy()
        return self.ops[i - 1].adjoint_apply(u)

    def max_norm_sq(self) -> float:
        """max_i ||G_i||^2 over all n maps (G_n contributes 1)."""
        norms = [op.norm() for op in self.ops] + [1.0]
        return max(norms) ** 2

    def check_point(self, p: ProductPoint) -> None:
        if p.dims != self.dims:
            raise DimensionMismatchError(f"point dims {p.dims} do not match family {self.dims}")

    def adjoint_gap(self, n_samples: int = 20, seed: int = 0) -> float:
        """Worst relative gap between <G x, u> and <x, G^* u> on random vector pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for i in range(1, self.n + 1):
            for _ in range(n_samples):
                x = rng.standard_normal(self.dim0)
                u = rng.standard_normal(self.block_dim(i))
                lhs = float(np.dot(self.apply(i, x), u))
                rhs = float(np.dot(x, self.adjoint(i, u)))
                scale = max(1.0, abs(lhs), abs(rhs))
                worst = max(worst, abs(lhs - rhs) / scale)
        return worst


def implied_dual_block(p: ProductPoint, f: LinearOpFamily) -> np.ndarray:
    """w_n = -sum_{i<n} G_i^* w_i."""
    f.check_point(p)
    total = np.zeros(f.dim0)
    for i, w_i in enumerate(p.w, start=1):
        total += f.adjoint(i, w_i)
    return -total


def family_apply(f: LinearOpFamily, i: int, x: np.ndarray) -> np.ndarray:
    return f.apply(i, x)


def family_adjoint(f: LinearOpFamily, i: int, u: np.ndarray) -> np.ndarray:
    return f.adjoint(i, u)
