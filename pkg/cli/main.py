"""
ps-solve CLI - projective splitting runs, traces and audits
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from cli.config import ConfigManager, env_seed
from splitting.diagnostics import AuditReport, CertificateInputs, audit_trace
from splitting.errors import ProblemFormatError, SplittingError, VariantCompatibilityError
from splitting.pipeline import RunSpec, VerifyConfig, create_verification_pipeline, generate_problem, run_solve
from splitting.problem_io import save_problem
from splitting.problems import GENERATORS
from splitting.ps_core import SolverConfig
from splitting.ps_variants import VARIANT_NAMES
from splitting.trace import read_trace

# Load environment variables
load_dotenv()

console = Console()

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2


def _exit_code(error: Exception) -> int:
    if isinstance(error, (ProblemFormatError, VariantCompatibilityError)):
        return EXIT_INPUT
    if isinstance(error, SplittingError):
        return EXIT_SOLVER
    return EXIT_INPUT


def _fail(error: Exception) -> None:
    code = _exit_code(error)
    label = "Solver error" if code == EXIT_SOLVER else "Invalid input"
    console.print(f"[red]❌ {label}: {error}[/red]")
    sys.exit(code)


HANDLED = (SplittingError, ValidationError, FileNotFoundError, ValueError)


def _seed(seed: Optional[int]) -> int:
    """PS_SEED, then --seed, then the config.json seed."""
    override = env_seed()
    if override is not None:
        return override
    if seed is not None:
        return seed
    return int(ConfigManager().get_setting("seed", 0))


@click.group()
@click.version_option(version="0.1.0")
@click.option("--debug", is_flag=True, help="Enable debug mode")
@click.pass_context
def main(ctx: click.Context, debug: bool):
    """ps-solve - strongly convergent projective splitting"""
    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug
    if debug:
        console.log("[yellow]Debug mode enabled[/yellow]")


def problem_options(fn):
    fn = click.option("--seed", type=int, default=None,
                      help="Generator seed [default: config seed] (PS_SEED overrides)")(fn)
    fn = click.option("--mu", type=float, default=0.5, show_default=True,
                      help="l1 weight (lasso, fused)")(fn)
    fn = click.option("--cols", type=int, default=4, show_default=True)(fn)
    fn = click.option("--rows", type=int, default=8, show_default=True)(fn)
    fn = click.option("--dim", type=int, default=10, show_default=True,
                      help="Dimension (affine, skew)")(fn)
    return fn


@main.command()
@click.option("--problem", type=click.Choice(sorted(GENERATORS)), required=True)
@problem_options
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Problem JSON path")
@click.pass_context
def gen(ctx: click.Context, problem: str, dim: int, rows: int, cols: int, mu: float,
        seed: Optional[int], out: str):
    """Generate a seeded problem instance and write it as JSON."""
    try:
        instance = generate_problem(problem, dim=dim, rows=rows, cols=cols, mu=mu,
                                    seed=_seed(seed))
        path = save_problem(instance, out)
    except HANDLED as e:
        _fail(e)
    console.print(f"[green]✅ Wrote {instance.name} (dims {list(instance.dims)}) to {path}[/green]")


@main.command()
@click.option("--problem", type=click.Choice(sorted(GENERATORS)), default=None)
@click.option("--problem-file", type=click.Path(exists=True, dir_okay=False), default=None)
@problem_options
@click.option("--variant", type=click.Choice(VARIANT_NAMES), default="generic", show_default=True)
@click.option("--sigma", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta0", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--lambda", "lambda_value", type=float, default=None,
              help="Step size of plain resolvent blocks")
@click.option("--rho", type=float, default=None, help="Approximate-solution tolerance")
@click.option("--max-iter", type=int, default=None)
@click.option("--parallel", is_flag=True, default=False, help="Solve blocks on a thread pool")
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="Trace CSV path")
@click.option("--summary", type=click.Path(dir_okay=False), default=None,
              help="Summary JSON path (default: trace path with .json)")
@click.option("--allow-unverified", is_flag=True, default=False,
              help="Skip the forward-operator regularity audit")
@click.option("--inexact", is_flag=True, default=False,
              help="Seeded inexact inner steps (generic variant)")
@click.option("--inexact-seed", type=int, default=0)
@click.pass_context
def solve(ctx: click.Context, problem: Optional[str], problem_file: Optional[str], dim: int,
          rows: int, cols: int, mu: float, seed: Optional[int], variant: str,
          sigma: Optional[float], alpha: Optional[float], beta0: Optional[float],
          gamma: Optional[float], lambda_value: Optional[float], rho: Optional[float],
          max_iter: Optional[int], parallel: bool, trace: Optional[str], summary: Optional[str],
          allow_unverified: bool, inexact: bool, inexact_seed: int):
    """Run the solver and write the iteration trace and run summary."""
    debug = ctx.obj["debug"]
    mgr = ConfigManager()
    settings = mgr.solver_settings()
    overrides = {"sigma": sigma, "alpha": alpha, "beta0": beta0, "gamma": gamma,
                 "lambda_value": lambda_value, "rho_tol": rho, "max_iter": max_iter}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    settings["parallel"] = parallel

    trace_path = Path(trace) if trace else Path(mgr.get_setting("trace_dir", ".")) / "trace.csv"
    summary_path = Path(summary) if summary else trace_path.with_suffix(".json")
    try:
        spec = RunSpec(
            problem=problem,
            problem_file=Path(problem_file) if problem_file else None,
            dim=dim, rows=rows, cols=cols, mu=mu, seed=_seed(seed),
            variant=variant,
            solver=SolverConfig(**settings),
            trace=trace_path,
            summary=summary_path,
            allow_unverified=allow_unverified,
            inexact=inexact,
            inexact_seed=inexact_seed,
        )
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      console=console) as prog:
            task = prog.add_task(f"Solving with the {variant} variant...", total=None)
            outcome = run_solve(spec, debug=debug)
            prog.update(task, completed=True)
    except HANDLED as e:
        _fail(e)

    show_run_summary(outcome.summary)
    console.print(f"[green]📈 Trace written to {trace_path}[/green]")
    console.print(f"[green]📝 Summary written to {summary_path}[/green]")


def show_run_summary(summary: Dict[str, Any]) -> None:
    table = Table(title="Run Summary")
    table.add_column("Field", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Problem", str(summary["problem"]["name"]))
    table.add_row("Variant", summary["variant"])
    table.add_row("Status", summary["status"])
    table.add_row("Iterations", str(summary["iterations"]))
    residuals = summary.get("residuals") or {}
    for key in ("dual", "primal_max", "eps_sum"):
        if key in residuals:
            table.add_row(f"Residual {key}", f"{residuals[key]:.3e}")
    if summary.get("d0") is not None:
        table.add_row("d0", f"{summary['d0']:.6e}")
    if summary.get("distance_to_oracle") is not None:
        table.add_row("Distance to oracle", f"{summary['distance_to_oracle']:.3e}")
    console.print(table)


def _certificate_source(trace: Path, summary: Optional[str],
                        d0: Optional[float]) -> Tuple[Optional[CertificateInputs], Optional[float], bool]:
    path = Path(summary) if summary else trace.with_suffix(".json")
    inputs: Optional[CertificateInputs] = None
    conditional = d0 is not None
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ProblemFormatError(f"{path}: invalid JSON ({e})") from e
        if data.get("certificate_inputs"):
            inputs = CertificateInputs.from_dict(data["certificate_inputs"])
        if d0 is None:
            d0 = data.get("d0")
    elif summary:
        raise FileNotFoundError(f"Summary not found: {path}")
    return inputs, d0, conditional and d0 is not None


@main.command()
@click.option("--trace", type=click.Path(dir_okay=False), required=True, help="Trace CSV")
@click.option("--d0", type=float, default=None,
              help="Distance from p0 to the solution set (default: from the summary)")
@click.option("--summary", type=click.Path(dir_okay=False), default=None,
              help="Run summary with certificate inputs (default: trace path with .json)")
@click.option("--max-k", type=int, default=None, help="Last iteration for complexity checks")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the audit report JSON here")
@click.pass_context
def audit(ctx: click.Context, trace: str, d0: Optional[float], summary: Optional[str],
          max_k: Optional[int], tol: float, report_path: Optional[str]):
    """Audit a trace against the convergence inequalities."""
    try:
        records = read_trace(trace)
        inputs, d0, conditional = _certificate_source(Path(trace), summary, d0)
        report = audit_trace(records, inputs, d0, tol=tol, max_k=max_k)
    except HANDLED as e:
        _fail(e)

    if conditional and report.certificate is not None:
        report.certificate["d0_source"] = f"conditional on d0 = {d0}"
    data = report.to_dict()
    if report_path:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    show_audit_report(report)
    if not report.ok:
        sys.exit(EXIT_SOLVER)


def show_audit_report(report: AuditReport) -> None:
    console.print(f"[blue]🔎 Audited {report.iterations} iterations, "
                  f"{len(report.checks_run)} checks[/blue]")
    if report.ok:
        console.print("[green]✅ No flags raised[/green]")
        return
    table = Table(title="Audit Flags")
    table.add_column("Check", style="cyan")
    table.add_column("Iteration", style="yellow")
    table.add_column("Slack", style="magenta")
    table.add_column("Message", style="red")
    for flag in report.flags[:50]:
        table.add_row(flag.check, str(flag.iteration), f"{flag.slack:.3e}", flag.message)
    console.print(table)
    if len(report.flags) > 50:
        console.print(f"[dim]... {len(report.flags) - 50} more flags[/dim]")


@main.command()
@click.option("--iterations", type=int, default=5000, show_default=True)
@click.option("--complexity-k", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=None,
              help="Seed [default: config seed] (PS_SEED overrides)")
@click.option("--no-inexact", is_flag=True, default=False, help="Skip the inexact LASSO run")
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              default="verify_report.json", show_default=True)
@click.pass_context
def verify(ctx: click.Context, iterations: int, complexity_k: int, seed: Optional[int],
           no_inexact: bool, report_path: str):
    """Run the invariant suite on seeded instances of every problem family."""
    debug = ctx.obj["debug"]
    config = VerifyConfig(iterations=iterations, complexity_k=complexity_k,
                          seed=_seed(seed), include_inexact=not no_inexact)
    try:
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      console=console) as prog:
            task = prog.add_task("Running verification suite...", total=None)
            results = create_verification_pipeline(config, debug=debug).run()
            prog.update(task, completed=True)
    except HANDLED as e:
        _fail(e)

    Path(report_path).parent.mkdir(parents=True, exist_ok=True)
    Path(report_path).write_text(json.dumps(results, indent=2, default=str) + "\n",
                                 encoding="utf-8")

    table = Table(title="Verification Runs")
    table.add_column("Problem", style="cyan")
    table.add_column("Variant", style="blue")
    table.add_column("Status", style="green")
    table.add_column("Iterations", style="yellow")
    table.add_column("Flags", style="magenta")
    for row in results["stages"]["runs"]["results"]:
        table.add_row(row["problem"], row["variant"], row["status"],
                      str(row.get("iterations", "-")), str(row["flags"]))
    console.print(table)
    for stage in ("contracts", "gate", "determinism"):
        flags = results["stages"][stage]["results"]["flags"]
        mark = "[green]✅" if flags == 0 else "[red]❌"
        console.print(f"{mark} {stage}[/]")
    total = results["summary"]["total_flags"]
    if total:
        console.print(f"[red]{total} flags raised; report in {report_path}[/red]")
        sys.exit(EXIT_SOLVER)
    console.print(f"[green]✅ All checks passed; report in {report_path}[/green]")


@main.command()
@click.option("--show", is_flag=True, help="Show current configuration")
@click.option("--set", "set_kv", nargs=2, type=str, help="Set a config value: KEY VALUE")
def config(show: bool, set_kv: Optional[tuple]):
    """
    Manage solver defaults (config.json).
    """
    mgr = ConfigManager()
    if show:
        mgr.show()
        return

    if set_kv:
        key, raw = set_kv
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        mgr.set_setting(key, value)
        console.print(f"[green]✅ Updated config.json: set {key}[/green]")
        return

    console.print("[blue]Usage:[/blue] ps-solve config --show")
    console.print("[blue]       ps-solve config --set solver.sigma 0.7[/blue]")


if __name__ == "__main__":
    main()
