"""
Residuals, explicit constants, complexity certificates and trace audits.

audit_trace replays every inequality the solver's convergence analysis rests
on against a recorded trace and reports each violation as an AuditFlag.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from splitting.errors import IncompleteTraceError
from splitting.product_space import LinearOpFamily
from splitting.separator import BlockTriple, check_blocks, dual_sum, primal_gaps
from splitting.trace import IterationRecord

AUDIT_TOL = 1e-8


# ---------------------------
# Residuals
# ---------------------------

@dataclass
class Residuals:
    dual: float
    primal: List[float]
    eps_sum: float

    @property
    def primal_max(self) -> float:
        return max(self.primal, default=0.0)

    def check_approx(self, rho: float) -> bool:
        return self.dual <= rho and self.primal_max <= rho and self.eps_sum <= rho

    def to_dict(self) -> Dict[str, Any]:
        return {"dual": self.dual, "primal": list(self.primal),
                "primal_max": self.primal_max, "eps_sum": self.eps_sum}


def residuals(blocks: Sequence[BlockTriple], f: LinearOpFamily) -> Residuals:
    check_blocks(blocks, f)
    return Residuals(
        dual=float(np.linalg.norm(dual_sum(blocks, f))),
        primal=[float(np.linalg.norm(g)) for g in primal_gaps(blocks, f)],
        eps_sum=float(sum(t.eps for t in blocks)),
    )


# ---------------------------
# Constants & certificates
# ---------------------------

def _lambda_factor(lam_lo: float, lam_hi: float) -> float:
    return min(lam_lo, 1.0 / lam_hi)


def constant_c(n: int, max_g_norm_sq: float, gamma: float, sigma: float,
               lam_lo: float, lam_hi: float) -> float:
    """c = n max||G_i||^2 * 4 max{1, 1/gamma} / ((1 - sigma^2) min{lam_lo, 1/lam_hi})."""
    if not 0 <= sigma < 1:
        raise ValueError(f"sigma must lie in [0, 1), got {sigma}")
    return n * max_g_norm_sq * 4.0 * max(1.0, 1.0 / gamma) / (
        (1.0 - sigma ** 2) * _lambda_factor(lam_lo, lam_hi)
    )


def omega(alpha_bar: float, beta_bar: float, s_bar: float) -> float:
    """Omega = (1 + a)[(1 + b)[1 + a(1 + b)] + s]."""
    return (1.0 + alpha_bar) * ((1.0 + beta_bar) * (1.0 + alpha_bar * (1.0 + beta_bar)) + s_bar)


@dataclass
class CertificateInputs:
    """Everything the certificate needs besides d0; echoed into run summaries."""
    n: int
    max_g_norm_sq: float
    gamma: float
    sigma: float
    lambda_lower: float
    lambda_upper: float
    alpha_bar: float
    beta_bar: float
    s_bar: float
    skip_eps: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CertificateInputs":
        names = cls.__dataclass_fields__.keys()
        return cls(**{k: data[k] for k in names if k in data})


@dataclass
class Certificate:
    c: float
    omega: float
    d0: Optional[float]
    inputs: CertificateInputs
    conditional: bool = False

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ValueError(f"constant c must be positive, got {self.c}")
        if not self.omega >= 1:
            raise ValueError(f"omega must be at least 1, got {self.omega}")

    def bounds(self, k: int) -> Tuple[float, float, float]:
        i = self.inputs
        return complexity_bounds(k, self, i.n, i.max_g_norm_sq, i.gamma, i.sigma,
                                 i.lambda_lower, i.lambda_upper)

    def describe(self) -> Dict[str, Any]:
        label = "oracle" if not self.conditional else f"conditional on d0 = {self.d0}"
        return {"c": self.c, "omega": self.omega, "d0": self.d0, "d0_source": label,
                "inputs": self.inputs.to_dict()}


def build_certificate(inputs: CertificateInputs, d0: Optional[float],
                      conditional: bool = False) -> Certificate:
    return Certificate(
        c=constant_c(inputs.n, inputs.max_g_norm_sq, inputs.gamma, inputs.sigma,
                     inputs.lambda_lower, inputs.lambda_upper),
        omega=omega(inputs.alpha_bar, inputs.beta_bar, inputs.s_bar),
        d0=d0,
        inputs=inputs,
        conditional=conditional,
    )


def complexity_bounds(k: int, cert: Certificate, n: int, max_g_norm_sq: float,
                      gamma: float, sigma: float, lam_lo: float,
                      lam_hi: float) -> Tuple[float, float, float]:
    """Explicit (dual, primal, eps) bounds after k + 1 iterations."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if cert.d0 is None:
        raise ValueError("certificate bounds need d0")
    d0 = cert.d0
    base = 4.0 * max(1.0, 1.0 / gamma) / ((1.0 - sigma ** 2) * _lambda_factor(lam_lo, lam_hi))
    scale = n * max_g_norm_sq * d0 / math.sqrt(k + 1)
    primal = scale * base * math.sqrt(cert.omega)
    dual = math.sqrt(gamma) * primal
    eps = (n * max_g_norm_sq * d0 ** 2 / (k + 1)) * (sigma ** 2 / (1.0 - sigma ** 2)) * base * cert.omega
    return dual, primal, eps


# ---------------------------
# Trace audit
# ---------------------------

@dataclass
class AuditFlag:
    check: str
    iteration: int
    slack: float
    message: str
    severity: str = "error"


@dataclass
class AuditReport:
    iterations: int = 0
    flags: List[AuditFlag] = field(default_factory=list)
    checks_run: List[str] = field(default_factory=list)
    certificate: Optional[Dict[str, Any]] = None
    worst_slack: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.flags

    def _track(self, check: str, k: int, slack: float, scale: float, tol: float,
               message: str) -> None:
        if check not in self.checks_run:
            self.checks_run.append(check)
        relative = slack / scale
        self.worst_slack[check] = min(self.worst_slack.get(check, math.inf), relative)
        if relative < -tol:
            self.flags.append(AuditFlag(check, k, slack, message))

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for flag in self.flags:
            out[flag.check] = out.get(flag.check, 0) + 1
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "ok": self.ok,
            "checks_run": list(self.checks_run),
            "worst_relative_slack": dict(self.worst_slack),
            "flags": [asdict(f) for f in self.flags],
            "certificate": self.certificate,
        }


def _next_distance(trace: Sequence[IterationRecord], idx: int) -> Optional[float]:
    rec = trace[idx]
    if rec.dist_next is not None:
        return rec.dist_next
    if idx + 1 < len(trace):
        return trace[idx + 1].dist_p0
    return None


def audit_trace(trace: Sequence[IterationRecord],
                inputs: Optional[CertificateInputs] = None,
                d0: Optional[float] = None,
                tol: float = AUDIT_TOL,
                max_k: Optional[int] = None) -> AuditReport:
    """
    Audit a trace. Checks that need the certificate inputs or d0 are skipped
    when those are not supplied; checks that need in-memory extras are
    skipped for traces read back from CSV.
    """
    report = AuditReport(iterations=len(trace))
    if not trace:
        return report
    for idx, rec in enumerate(trace):
        if rec.k != trace[0].k + idx:
            raise IncompleteTraceError(f"trace jumps from k={trace[idx - 1].k} to k={rec.k}")
        if any(math.isnan(v) for v in (rec.phi_tilde, rec.grad_norm_sq, rec.dist_p0)):
            raise IncompleteTraceError(f"iteration {rec.k} is missing recorded norms")

    cert: Optional[Certificate] = None
    if inputs is not None:
        cert = build_certificate(inputs, d0)
        report.certificate = cert.describe()

    gap_sum = 0.0
    step_sum = 0.0
    best = [math.inf, math.inf, math.inf]
    for idx, rec in enumerate(trace):
        k = rec.k
        scale = 1.0 + rec.grad_norm_sq + abs(rec.phi_tilde)

        report._track("separator_positive", k, rec.phi_tilde + 1e-12, scale, tol,
                      f"phi(p_tilde) = {rec.phi_tilde:.3e} is negative")

        if rec.has_step:
            nxt = _next_distance(trace, idx)
            if nxt is not None:
                slack = nxt ** 2 - rec.dist_p0 ** 2 - rec.step_norm ** 2
                report._track("fejer_expansion", k, slack, 1.0 + nxt ** 2, tol,
                              f"||p_next - p0||^2 falls short by {-slack:.3e}")
            gap_sum += rec.proj_gap ** 2
            step_sum += rec.step_norm ** 2

        for slack in rec.subgradient_slack:
            report._track("eps_subgradient", k, slack, 1.0, tol,
                          "block output fails the Fenchel-Young eps-subgradient test")

        if rec.watch_phi_max is not None:
            limit = max(1e-9, rec.watch_tol or 0.0)
            report._track("solution_in_H", k, limit - rec.watch_phi_max, 1.0, 0.0,
                          f"oracle point has phi = {rec.watch_phi_max:.3e}")
        if rec.watch_w_max is not None:
            limit = max(1e-9, rec.watch_tol or 0.0)
            report._track("solution_in_W", k, limit - rec.watch_w_max, 1.0, 0.0,
                          f"oracle point violates W by {rec.watch_w_max:.3e}")

        if cert is not None:
            i = cert.inputs
            c = cert.c
            report._track("gradient_bound", k, c * rec.phi_tilde - rec.grad_norm_sq,
                          1.0 + rec.grad_norm_sq + c * abs(rec.phi_tilde), tol,
                          "c * phi(p_tilde) < ||grad phi||^2")
            if rec.tilde_gap_sq is not None:
                lower = 0.5 * (1.0 - i.sigma ** 2) * _lambda_factor(
                    i.lambda_lower, i.lambda_upper) * rec.tilde_gap_sq
                report._track("separator_lower_bound", k, rec.phi_tilde - lower + 1e-9,
                              scale + lower, tol, f"phi(p_tilde) below lower bound {lower:.3e}")
            if rec.weighted_gap_sq is not None:
                fine = 0.5 * (1.0 - i.sigma ** 2) * rec.weighted_gap_sq
                report._track("separator_weighted_bound", k, rec.phi_tilde - fine + 1e-9,
                              scale + fine, tol, f"phi(p_tilde) below weighted bound {fine:.3e}")
            if rec.has_step:
                gap_sq = rec.proj_gap ** 2
                report._track("gradient_step_bound", k,
                              c * rec.proj_gap - math.sqrt(rec.grad_norm_sq),
                              1.0 + math.sqrt(rec.grad_norm_sq), tol,
                              "||grad phi|| exceeds c * ||p_next - p_tilde||")
                report._track("phi_step_bound", k, c * gap_sq - rec.phi_tilde,
                              scale + c * gap_sq, tol,
                              "phi(p_tilde) exceeds c * ||p_next - p_tilde||^2")
                eps_cap = (i.sigma ** 2 / (1.0 - i.sigma ** 2)) * c * gap_sq
                report._track("eps_bound", k, eps_cap - rec.eps_sum,
                              1.0 + eps_cap + rec.eps_sum, tol,
                              f"eps sum {rec.eps_sum:.3e} exceeds {eps_cap:.3e}")

        if d0 is not None:
            report._track("distance_bound", k, d0 - rec.dist_p0, 1.0 + d0, tol,
                          f"||p_k - p0|| = {rec.dist_p0:.6e} exceeds d0 = {d0:.6e}")
            report._track("step_summability", k, d0 ** 2 - step_sum, 1.0 + d0 ** 2, tol,
                          f"running step sum {step_sum:.3e} exceeds d0^2")
            if cert is not None:
                cap = cert.omega * d0 ** 2
                report._track("gap_summability", k, cap - gap_sum, 1.0 + cap, tol,
                              f"running gap sum {gap_sum:.3e} exceeds omega * d0^2 = {cap:.3e}")

        if cert is not None and d0 is not None and (max_k is None or k <= max_k):
            best[0] = min(best[0], rec.res_dual)
            best[1] = min(best[1], rec.res_primal_max)
            best[2] = min(best[2], rec.eps_sum)
            dual_b, primal_b, eps_b = cert.bounds(k)
            report._track("complexity_dual", k, dual_b - best[0], 1.0 + dual_b, tol,
                          f"min dual residual {best[0]:.3e} above bound {dual_b:.3e}")
            report._track("complexity_primal", k, primal_b - best[1], 1.0 + primal_b, tol,
                          f"min primal residual {best[1]:.3e} above bound {primal_b:.3e}")
            if not cert.inputs.skip_eps:
                report._track("complexity_eps", k, eps_b - best[2], 1.0 + eps_b, tol,
                              f"min eps sum {best[2]:.3e} above bound {eps_b:.3e}")
    return report
