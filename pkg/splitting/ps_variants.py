"""
Forward-backward and forward-backward-forward (Tseng) block steps.

Both run inside the generic solver as inner solvers with a fixed step-size
rule; split blocks take the variant step and plain resolvent blocks keep the
exact proximal step.
"""

from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

from splitting.errors import (
    InnerSolverContractError,
    UnsupportedCheckError,
    VariantCompatibilityError,
)
from splitting.operator_kit import (
    COCOERCIVE,
    LIPSCHITZ,
    ForwardOracle,
    MonotoneOracle,
    OperatorBlock,
    ProjectableSet,
    affine_enlargement_check,
    audit_forward,
    eps_subdiff_check,
    resolvent,
)
from splitting.ps_core import (
    ExactProxSolver,
    InnerSolver,
    PerturbedProxSolver,
    SolverConfig,
    exact_prox_inner,
)
from splitting.separator import BlockTriple


class VariantKind(str, Enum):
    FORWARD_BACKWARD = "forward_backward"
    TSENG = "tseng"

    @classmethod
    def parse(cls, name: str) -> "VariantKind":
        aliases = {"fb": cls.FORWARD_BACKWARD, "forward_backward": cls.FORWARD_BACKWARD,
                   "tseng": cls.TSENG, "fbf": cls.TSENG}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ValueError(f"unknown variant '{name}'")

    @property
    def regularity(self) -> str:
        return COCOERCIVE if self is VariantKind.FORWARD_BACKWARD else LIPSCHITZ


def variant_stepsize(kind: VariantKind, sigma: float, L: float) -> float:
    if not 0 < sigma < 1:
        raise ValueError(f"variant steps need 0 < sigma < 1, got {sigma}")
    if not L > 0:
        raise ValueError(f"modulus must be positive, got {L}")
    if kind is VariantKind.FORWARD_BACKWARD:
        return 2.0 * sigma ** 2 / L
    return sigma / L


def variant_lambda_bounds(kind: VariantKind, sigma: float,
                          moduli: Iterable[float]) -> Tuple[float, float]:
    """Step interval implied by the moduli: steps shrink as L grows."""
    moduli = list(moduli)
    if not moduli:
        raise ValueError("at least one modulus is needed")
    return variant_stepsize(kind, sigma, max(moduli)), variant_stepsize(kind, sigma, min(moduli))


def _forward_point(F: ForwardOracle, B: MonotoneOracle, C: ProjectableSet, lam: float,
                   target_z: np.ndarray, target_w: np.ndarray
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    z_bar = C.project(target_z)
    F_bar = F.eval(z_bar)
    u = target_z + lam * target_w
    x = resolvent(B, lam, u - lam * F_bar)
    if not C.contains(x, tol=1e-9 * (1.0 + float(np.linalg.norm(x)))):
        raise InnerSolverContractError("backward step left the feasibility set C")
    return z_bar, F_bar, u, x


def fb_block_step(F: ForwardOracle, B: MonotoneOracle, C: ProjectableSet, lam: float,
                  target_z: np.ndarray, target_w: np.ndarray) -> BlockTriple:
    z_bar, _, u, x = _forward_point(F, B, C, lam, target_z, target_w)
    d = x - z_bar
    return BlockTriple(x=x, y=(u - x) / lam, eps=0.25 * F.modulus * float(d @ d), lam=lam)


def tseng_block_step(F: ForwardOracle, B: MonotoneOracle, C: ProjectableSet, lam: float,
                     target_z: np.ndarray, target_w: np.ndarray) -> BlockTriple:
    _, F_bar, u, x = _forward_point(F, B, C, lam, target_z, target_w)
    y = (u - x) / lam + F.eval(x) - F_bar
    return BlockTriple(x=x, y=y, eps=0.0, lam=lam)


class VariantInnerSolver(InnerSolver):
    def __init__(self, kind: VariantKind):
        self.kind = kind
        self.name = kind.value

    def step_size(self, block: OperatorBlock, cfg: SolverConfig) -> float:
        if block.is_split:
            return variant_stepsize(self.kind, cfg.sigma, block.F.modulus)
        return cfg.lambda_value

    def lambda_bounds(self, blocks: Sequence[OperatorBlock],
                      cfg: SolverConfig) -> Tuple[float, float]:
        moduli = [block.F.modulus for block in blocks if block.is_split]
        if not moduli:
            return super().lambda_bounds(blocks, cfg)
        lo, hi = variant_lambda_bounds(self.kind, cfg.sigma, moduli)
        if len(moduli) < len(blocks):
            lo, hi = min(lo, cfg.lambda_value), max(hi, cfg.lambda_value)
        return lo, hi

    def skips_eps_certificate(self) -> bool:
        return self.kind is VariantKind.TSENG

    def lands_on_graph(self, block: OperatorBlock) -> bool:
        return not block.is_split

    def solve_block(self, block: OperatorBlock, lam: float, target_z: np.ndarray,
                    target_w: np.ndarray, sigma: float, k: int = 0,
                    index: int = 1) -> BlockTriple:
        if not block.is_split:
            return exact_prox_inner(block, lam, target_z, target_w)
        if self.kind is VariantKind.FORWARD_BACKWARD:
            t = fb_block_step(block.F, block.B, block.C, lam, target_z, target_w)
            holds = self._inclusion_holds(lambda: fb_inclusion_audit(block, t, target_z, target_w))
        else:
            t = tseng_block_step(block.F, block.B, block.C, lam, target_z, target_w)
            holds = self._inclusion_holds(lambda: tseng_inclusion_audit(block, t))
        if not holds:
            raise InnerSolverContractError(
                f"block {index} at k={k}: {self.name} step output fails its inclusion test"
            )
        return t

    @staticmethod
    def _inclusion_holds(audit: Callable[[], bool]) -> bool:
        try:
            return audit()
        except UnsupportedCheckError:
            # forward operator without affine data or a conjugate
            return True


def check_compatibility(kind: VariantKind, blocks: Sequence[OperatorBlock],
                        dims: Sequence[int], allow_unverified: bool = False,
                        seed: int = 0) -> None:
    """
    Refuse a variant whose regularity requirement the split blocks do not
    meet, either as declared or under the randomized audit.
    """
    if allow_unverified:
        return
    for i, (block, dim) in enumerate(zip(blocks, dims), start=1):
        if not block.is_split:
            continue
        F = block.F
        if kind is VariantKind.FORWARD_BACKWARD and F.regularity != COCOERCIVE:
            raise VariantCompatibilityError(
                f"block {i}: forward-backward needs a cocoercive F, declared {F.regularity}"
            )
        audit = audit_forward(F, dim, seed=seed)
        if not audit.supports(kind.regularity):
            raise VariantCompatibilityError(
                f"block {i}: {kind.regularity} audit failed "
                f"(cocoercive slack {audit.worst_cocoercive_slack:.3e}, "
                f"lipschitz slack {audit.worst_lipschitz_slack:.3e})"
            )


def fb_inclusion_audit(block: OperatorBlock, t: BlockTriple, target_z: np.ndarray,
                       target_w: np.ndarray) -> bool:
    """y - b in F^[eps](x) for the b in B(x) produced by the backward step."""
    F, B, C = block.F, block.B, block.C
    lam = t.lam
    z_bar = C.project(target_z)
    F_bar = F.eval(z_bar)
    b = (target_z + lam * target_w - lam * F_bar - t.x) / lam
    if not B.contains(t.x, b, tol=1e-8 * (1.0 + float(np.linalg.norm(b)))):
        return False
    data = F.affine_data()
    if data is not None:
        return affine_enlargement_check(data[0], data[1], t.x, t.y - b, t.eps)
    return eps_subdiff_check(F.conjugate_pair, t.x, t.y - b, t.eps)


def tseng_inclusion_audit(block: OperatorBlock, t: BlockTriple,
                          tol: Optional[float] = None) -> bool:
    """y - F(x) in B(x)."""
    v = t.y - block.F.eval(t.x)
    tol = 1e-8 * (1.0 + float(np.linalg.norm(v))) if tol is None else tol
    return block.B.contains(t.x, v, tol=tol)


VARIANT_NAMES = ("generic", "fb", "tseng")


def make_inner_solver(variant: str, inexact: bool = False, inexact_seed: int = 0) -> InnerSolver:
    """Inner solver for a variant name; `inexact` only applies to generic."""
    if variant == "generic":
        return PerturbedProxSolver(seed=inexact_seed) if inexact else ExactProxSolver()
    if inexact:
        raise ValueError(f"inexact steps are only available for the generic variant, not '{variant}'")
    return VariantInnerSolver(VariantKind.parse(variant))
