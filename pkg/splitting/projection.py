"""
Projections in the gamma-metric onto half-spaces and onto H_k intersect W_k.

The intersection projection enumerates the four KKT active sets (none, H only,
W only, both) and keeps the closest feasible candidate.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from splitting.errors import InfeasibleProjectionError
from splitting.product_space import GammaMetric, ProductPoint
from splitting.separator import Separator

FEAS_TOL = 1e-9
MULT_TOL = 1e-12
GRAM_SINGULAR_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """{p : <normal, p>_gamma + offset <= 0}."""
    normal: ProductPoint
    offset: float

    def value(self, p: ProductPoint, m: GammaMetric) -> float:
        return m.inner(self.normal, p) + self.offset

    def contains(self, p: ProductPoint, m: GammaMetric, tol: float = 0.0) -> bool:
        return self.value(p, m) <= tol


def separator_halfspace(s: Separator) -> HalfSpace:
    """H_k = {phi_k <= 0}."""
    return HalfSpace(normal=s.gradient, offset=s.constant)


def anchor_halfspace(p0: ProductPoint, pk: ProductPoint, m: GammaMetric) -> HalfSpace:
    """W_k = {<p0 - pk, p - pk>_gamma <= 0}."""
    normal = p0 - pk
    return HalfSpace(normal=normal, offset=-m.inner(normal, pk))


def project_halfspace(p: ProductPoint, h: HalfSpace, m: GammaMetric) -> ProductPoint:
    value = h.value(p, m)
    if value <= 0.0:
        return p
    norm_sq = m.norm_sq(h.normal)
    if norm_sq == 0.0:
        raise InfeasibleProjectionError(
            f"degenerate half-space with positive offset {h.offset:.3e} is empty"
        )
    return p - (value / norm_sq) * h.normal


def feasibility_tolerance(normal: ProductPoint, p0: ProductPoint, m: GammaMetric) -> float:
    return FEAS_TOL * (1.0 + m.norm(normal)) * (1.0 + m.norm(p0))


@dataclass
class ProjectionResult:
    point: ProductPoint
    case: str
    candidates: List[Tuple[str, float]]


def project_onto_pair(p0: ProductPoint, pk: ProductPoint, H: HalfSpace, m: GammaMetric,
                      tol: Optional[float] = None) -> ProjectionResult:
    """
    argmin ||p - p0||_gamma over H intersect W(p0, pk), with the winning case.

    The unprojected candidates p0 ("0") and pk ("W") are admitted only when
    they lie in H exactly; the tolerance applies to the computed candidates
    "H" and "HW". A point with h(pk) > 0 therefore always moves.
    """
    tol = feasibility_tolerance(H.normal, p0, m) if tol is None else tol
    anchor_gap = p0 - pk
    b_sq = m.norm_sq(anchor_gap)

    if b_sq == 0.0:
        # p0 = pk: W is the whole space
        point = project_halfspace(p0, H, m)
        return ProjectionResult(point, "0" if point is p0 else "H", [])

    W = anchor_halfspace(p0, pk, m)
    h0 = H.value(p0, m)
    hk = H.value(pk, m)
    a_sq = m.norm_sq(H.normal)

    # pk is the projection of p0 onto W, so it wins whenever it lies in H
    if hk <= 0.0:
        return ProjectionResult(pk, "W", [("W", m.distance(pk, p0))])

    candidates: List[Tuple[str, ProductPoint]] = []
    if a_sq > 0.0:
        candidates.append(("H", p0 - (max(h0, 0.0) / a_sq) * H.normal))
        ab = m.inner(H.normal, anchor_gap)
        det = a_sq * b_sq - ab * ab
        if det > GRAM_SINGULAR_TOL * a_sq * b_sq:
            # both active: mu = ||b||^2 h(pk) / det, nu = 1 - <a, b> h(pk) / det,
            # written as a correction of pk to keep small steps accurate
            mu = b_sq * hk / det
            nu = 1.0 - ab * hk / det
            mult_tol = MULT_TOL * (1.0 + abs(mu) + abs(nu))
            if mu >= -mult_tol and nu >= -mult_tol:
                candidates.append(("HW", pk + (hk / det) * (ab * anchor_gap - b_sq * H.normal)))

    scored = [
        (case, m.distance(q, p0), q) for case, q in candidates
        if H.value(q, m) <= tol and W.value(q, m) <= tol
    ]
    if not scored:
        raise InfeasibleProjectionError(
            f"no feasible active set (h(p0)={h0:.3e}, h(pk)={hk:.3e}, "
            f"||normal||^2={a_sq:.3e}, ||p0-pk||^2={b_sq:.3e})"
        )
    best_case, _, best = min(scored, key=lambda item: item[1])
    return ProjectionResult(best, best_case, [(case, dist) for case, dist, _ in scored])


def project_onto_intersection(p0: ProductPoint, pk: ProductPoint, s: Separator,
                              m: GammaMetric) -> ProjectionResult:
    return project_onto_pair(p0, pk, separator_halfspace(s), m)


def project_p0_onto_intersection(p0: ProductPoint, pk: ProductPoint, s: Separator,
                                 m: GammaMetric) -> ProductPoint:
    return project_onto_intersection(p0, pk, s, m).point
