"""
Affine separator built from the block triples of one iteration.

phi(p) = sum_i (<G_i z - x_i, y_i - w_i> - eps_i), with w_n implied, which
collects to <z, sum G_i^* y_i + y_n> + sum_{i<n} <x_i - G_i x_n, w_i>
- sum <x_i, y_i> - sum eps_i.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from splitting.errors import DimensionMismatchError
from splitting.product_space import (
    GammaMetric,
    LinearOpFamily,
    ProductPoint,
    implied_dual_block,
)


@dataclass(frozen=True, eq=False)
class BlockTriple:
    """Output (x_i, y_i, eps_i) of one block step taken with step size lam."""
    x: np.ndarray
    y: np.ndarray
    eps: float
    lam: float

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise DimensionMismatchError(f"x and y differ in size: {x.size} vs {y.size}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "lam", float(self.lam))


def check_blocks(blocks: Sequence[BlockTriple], f: LinearOpFamily) -> None:
    if len(blocks) != f.n:
        raise DimensionMismatchError(f"expected {f.n} block triples, got {len(blocks)}")
    for i, t in enumerate(blocks, start=1):
        if t.x.size != f.block_dim(i):
            raise DimensionMismatchError(
                f"block {i} triple has size {t.x.size}, expected {f.block_dim(i)}"
            )


def dual_sum(blocks: Sequence[BlockTriple], f: LinearOpFamily) -> np.ndarray:
    """sum_{i<n} G_i^* y_i + y_n."""
    total = np.zeros(f.dim0)
    for i, t in enumerate(blocks, start=1):
        total += f.adjoint(i, t.y)
    return total


def primal_gaps(blocks: Sequence[BlockTriple], f: LinearOpFamily) -> List[np.ndarray]:
    """x_i - G_i x_n for i < n."""
    x_n = blocks[-1].x
    return [t.x - f.apply(i, x_n) for i, t in enumerate(blocks[:-1], start=1)]


class Separator:
    """Collected affine form of phi; immutable once built."""

    def __init__(self, blocks: Sequence[BlockTriple], family: LinearOpFamily,
                 metric: GammaMetric):
        check_blocks(blocks, family)
        self.blocks: Tuple[BlockTriple, ...] = tuple(blocks)
        self.family = family
        self.metric = metric

        s_z = dual_sum(self.blocks, family)
        gaps = primal_gaps(self.blocks, family)
        self.dual_vector = s_z
        self.primal_vectors = tuple(gaps)
        self.gradient = ProductPoint(s_z / metric.gamma, tuple(gaps))
        self.grad_norm_sq = float(s_z @ s_z) / metric.gamma + sum(float(g @ g) for g in gaps)
        self.constant = -sum(float(t.x @ t.y) for t in self.blocks) - self.eps_sum

    @property
    def eps_sum(self) -> float:
        return float(sum(t.eps for t in self.blocks))

    def value(self, p: ProductPoint) -> float:
        return self.metric.inner(self.gradient, p) + self.constant

    def block_value(self, p: ProductPoint) -> float:
        """Evaluation through the per-block form, with w_n implied from p."""
        w_n = implied_dual_block(p, self.family)
        duals = list(p.w) + [w_n]
        total = 0.0
        for i, (t, w_i) in enumerate(zip(self.blocks, duals), start=1):
            total += float((self.family.apply(i, p.z) - t.x) @ (t.y - w_i)) - t.eps
        return total


def build_separator(blocks: Sequence[BlockTriple], f: LinearOpFamily,
                    m: GammaMetric) -> Separator:
    return Separator(blocks, f, m)


def separator_eval(s: Separator, p: ProductPoint) -> float:
    return s.value(p)
