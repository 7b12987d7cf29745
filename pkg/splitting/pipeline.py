"""
Run orchestration: one validated solve (RunSpec -> trace + summary) and the
`verify` suite that replays the convergence invariants on seeded instances.
"""

import filecmp
import json
import logging
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

from splitting.diagnostics import AuditReport, audit_trace
from splitting.errors import SplittingError, VariantCompatibilityError
from splitting.operator_kit import LinearForward, WholeSpace, ZeroOperator
from splitting.problem_io import load_problem
from splitting.problems import GENERATORS, ProblemInstance
from splitting.ps_core import SolveResult, SolverConfig, error_criterion, solve
from splitting.ps_variants import (
    VARIANT_NAMES,
    VariantKind,
    check_compatibility,
    fb_block_step,
    make_inner_solver,
    tseng_block_step,
)
from splitting.trace import write_trace


# ---------------------------
# Single run
# ---------------------------

class RunSpec(BaseModel):
    """Problem selection, variant, solver settings and output paths of one run."""
    problem: Optional[str] = None
    problem_file: Optional[Path] = None
    dim: int = Field(10, ge=1)
    rows: int = Field(8, ge=1)
    cols: int = Field(4, ge=1)
    mu: float = Field(0.5, gt=0)
    seed: int = 0
    variant: str = "generic"
    solver: SolverConfig = Field(default_factory=SolverConfig)
    trace: Optional[Path] = None
    summary: Optional[Path] = None
    allow_unverified: bool = False
    inexact: bool = False
    inexact_seed: int = 0

    @validator("problem")
    def _known_problem(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in GENERATORS:
            raise ValueError(f"unknown problem '{v}' (choose from {sorted(GENERATORS)})")
        return v

    @validator("variant")
    def _known_variant(cls, v: str) -> str:
        if v not in VARIANT_NAMES:
            raise ValueError(f"unknown variant '{v}' (choose from {list(VARIANT_NAMES)})")
        return v

    @root_validator(skip_on_failure=True)
    def _one_source(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        if (values.get("problem") is None) == (values.get("problem_file") is None):
            raise ValueError("give exactly one of a problem generator or a problem file")
        if values.get("inexact") and values.get("variant") != "generic":
            raise ValueError("inexact steps are only available for the generic variant")
        return values

    def build_problem(self) -> ProblemInstance:
        if self.problem_file is not None:
            return load_problem(self.problem_file)
        return generate_problem(self.problem, dim=self.dim, rows=self.rows, cols=self.cols,
                                mu=self.mu, seed=self.seed)


def generate_problem(name: str, dim: int = 10, rows: int = 8, cols: int = 4,
                     mu: float = 0.5, seed: int = 0) -> ProblemInstance:
    if name == "affine":
        return GENERATORS[name](dim, seed)
    if name == "skew":
        return GENERATORS[name](dim, seed)
    if name in ("lasso", "fused"):
        return GENERATORS[name](rows, cols, mu, seed)
    raise ValueError(f"unknown problem '{name}'")


@dataclass
class RunOutcome:
    problem: ProblemInstance
    result: SolveResult
    summary: Dict[str, Any]


def _gate(spec: RunSpec, problem: ProblemInstance) -> None:
    if spec.variant == "generic":
        return
    check_compatibility(VariantKind.parse(spec.variant), problem.blocks,
                        problem.block_dims(), allow_unverified=spec.allow_unverified,
                        seed=spec.seed)


def build_summary(spec: RunSpec, problem: ProblemInstance, result: SolveResult) -> Dict[str, Any]:
    cfg = spec.solver
    metric = cfg.metric()
    p0 = problem.initial_point()
    solution = result.solution
    d0: Optional[float] = None
    dist: Optional[float] = None
    if problem.oracle is not None:
        d0 = problem.oracle.distance(p0, metric)
        if d0 is not None:
            target = problem.oracle.project(p0, metric)
            dist = float(np.linalg.norm(solution.z - target.z))
    return {
        "path": str(spec.trace) if spec.trace else None,
        "timestamp": datetime.now().isoformat(timespec="seconds"),
        "problem": {"name": problem.name, "params": problem.params, "dims": list(problem.dims)},
        "variant": spec.variant + ("+inexact" if spec.inexact else ""),
        "status": solution.status,
        "iterations": solution.iterations,
        "residuals": solution.residuals.to_dict() if solution.residuals else None,
        "solution_z": solution.z.tolist(),
        "config": cfg.echo(),
        "certificate_inputs": result.certificate_inputs.to_dict(),
        "d0": d0,
        "distance_to_oracle": dist,
    }


def run_solve(spec: RunSpec, debug: bool = False, watch: bool = True) -> RunOutcome:
    problem = spec.build_problem()
    _gate(spec, problem)
    inner = make_inner_solver(spec.variant, spec.inexact, spec.inexact_seed)
    watch_points = problem.oracle.sample_points(2, seed=spec.seed) if (
        watch and problem.oracle is not None) else []
    result = solve(problem, spec.solver, inner, watch_points=watch_points, debug=debug)
    if spec.trace is not None:
        write_trace(result.trace, spec.trace)
    summary = build_summary(spec, problem, result)
    if spec.summary is not None:
        spec.summary.parent.mkdir(parents=True, exist_ok=True)
        spec.summary.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return RunOutcome(problem=problem, result=result, summary=summary)


def audit_run(outcome: RunOutcome, max_k: Optional[int] = None) -> AuditReport:
    d0 = outcome.summary.get("d0")
    return audit_trace(outcome.result.trace, outcome.result.certificate_inputs, d0, max_k=max_k)


# ---------------------------
# Verify suite
# ---------------------------

@dataclass
class VerifyConfig:
    iterations: int = 5000
    complexity_k: int = 2000
    seed: int = 0
    sigma: float = 0.5
    alpha: float = 0.3
    beta0: float = 1.0
    inexact_sigma: float = 0.9
    include_inexact: bool = True
    problems: Dict[str, Dict[str, Any]] = field(default_factory=lambda: {
        "affine": {"dim": 10},
        "lasso": {"rows": 8, "cols": 4, "mu": 0.5},
        "fused": {"rows": 10, "cols": 6, "mu": 0.5},
        "skew": {"dim": 4},
    })


class VerificationPipeline:
    """
    Runs every applicable (problem, variant) pair with oracle watch points,
    audits the traces, and adds the variant contract, regularity gate and
    determinism stages.
    """

    def __init__(self, config: Optional[VerifyConfig] = None, debug: bool = False):
        self.config = config or VerifyConfig()
        self.debug = debug
        self.logger = self._setup_logging()

    def _setup_logging(self) -> logging.Logger:
        logger = logging.getLogger("VerificationPipeline")
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            logger.addHandler(handler)
        return logger

    def _spec(self, problem: str, variant: str, **overrides: Any) -> RunSpec:
        cfg = self.config
        solver = SolverConfig(sigma=overrides.pop("sigma", cfg.sigma), alpha=cfg.alpha,
                              beta0=cfg.beta0,
                              max_iter=overrides.pop("max_iter", cfg.iterations))
        return RunSpec(problem=problem, variant=variant, seed=cfg.seed, solver=solver,
                       **cfg.problems[problem], **overrides)

    def run_matrix(self) -> List[Dict[str, Any]]:
        runs: List[Tuple[str, str, Dict[str, Any]]] = [
            (name, variant, {}) for name in self.config.problems for variant in VARIANT_NAMES
        ]
        if self.config.include_inexact and "lasso" in self.config.problems:
            runs.append(("lasso", "generic", {"inexact": True, "inexact_seed": self.config.seed,
                                              "sigma": self.config.inexact_sigma}))
        rows: List[Dict[str, Any]] = []
        for name, variant, extra in runs:
            label = variant + ("+inexact" if extra.get("inexact") else "")
            spec = self._spec(name, variant, **dict(extra))
            try:
                outcome = run_solve(spec, debug=self.debug)
            except VariantCompatibilityError as e:
                self.logger.debug(f"{name}/{label} skipped: {e}")
                rows.append({"problem": name, "variant": label, "status": "skipped",
                             "reason": str(e), "flags": 0})
                continue
            except SplittingError as e:
                self.logger.error(f"{name}/{label} failed: {e}")
                rows.append({"problem": name, "variant": label, "status": "error",
                             "reason": str(e), "flags": 1})
                continue
            report = audit_run(outcome, max_k=self.config.complexity_k)
            summary = outcome.summary
            rows.append({
                "problem": name,
                "variant": label,
                "status": summary["status"],
                "iterations": summary["iterations"],
                "residuals": summary["residuals"],
                "distance_to_oracle": summary["distance_to_oracle"],
                "flags": len(report.flags),
                "flag_counts": report.counts(),
                "checks_run": len(report.checks_run),
                "subgradient_tests": sum(len(r.subgradient_slack) for r in outcome.result.trace),
            })
            self.logger.info(f"{name}/{label}: {summary['status']} after "
                             f"{summary['iterations']} iterations, {len(report.flags)} flags")
        return rows

    def run_contracts(self) -> Dict[str, Any]:
        """Equality cases of the variant error bounds on a scalar instance."""
        sigma = 0.5
        identity = LinearForward(np.eye(1), modulus=1.0)
        tz, tw = np.array([2.0]), np.array([0.0])
        fb = fb_block_step(identity, ZeroOperator(), WholeSpace(), 2 * sigma ** 2, tz, tw)
        fb_gap = abs(2 * fb.lam * fb.eps - sigma ** 2 * float((tz - fb.x) @ (tz - fb.x)))
        ts = tseng_block_step(identity, ZeroOperator(), WholeSpace(), sigma, tz, tw)
        e = ts.lam * ts.y + ts.x - (tz + ts.lam * tw)
        ts_gap = abs(float(np.linalg.norm(e)) - sigma * float(np.linalg.norm(tz - ts.x)))
        ok = (fb_gap <= 1e-12 and ts_gap <= 1e-12
              and error_criterion(fb, tz, tw, sigma).ok and error_criterion(ts, tz, tw, sigma).ok)
        return {"fb_equality_gap": fb_gap, "tseng_equality_gap": ts_gap,
                "flags": 0 if ok else 1}

    def run_gate(self) -> Dict[str, Any]:
        """Forward-backward must be refused on a skew (non-cocoercive) field."""
        spec = self._spec("skew", "fb")
        problem = spec.build_problem()
        try:
            _gate(spec, problem)
        except VariantCompatibilityError as e:
            return {"refused": True, "reason": str(e), "flags": 0}
        return {"refused": False, "flags": 1}

    def run_determinism(self) -> Dict[str, Any]:
        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for run in range(2):
                spec = self._spec("lasso", "generic", trace=Path(tmp) / f"run{run}.csv",
                                  inexact=True, inexact_seed=self.config.seed,
                                  max_iter=min(self.config.iterations, 500))
                run_solve(spec, debug=self.debug)
                paths.append(spec.trace)
            identical = filecmp.cmp(str(paths[0]), str(paths[1]), shallow=False)
        return {"identical": identical, "flags": 0 if identical else 1}

    def run(self) -> Dict[str, Any]:
        t0 = time.time()
        runs = self.run_matrix()
        contracts = self.run_contracts()
        gate = self.run_gate()
        determinism = self.run_determinism()
        total = (sum(r["flags"] for r in runs) + contracts["flags"] + gate["flags"]
                 + determinism["flags"])
        return {
            "pipeline": "verify",
            "status": "passed" if total == 0 else "failed",
            "total_duration": time.time() - t0,
            "stages": {
                "runs": {"status": "completed", "results": runs},
                "contracts": {"status": "completed", "results": contracts},
                "gate": {"status": "completed", "results": gate},
                "determinism": {"status": "completed", "results": determinism},
            },
            "summary": {"total_flags": total},
        }


def create_verification_pipeline(config: Optional[VerifyConfig] = None,
                                 debug: bool = False) -> VerificationPipeline:
    return VerificationPipeline(config, debug=debug)
