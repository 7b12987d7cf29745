"""
Per-iteration records and the plot-ready CSV trace format.

The CSV holds one row per iteration with the fixed header CSV_FIELDS. Floats
are written with 17 significant digits, so identical runs produce identical
files byte for byte.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from splitting.errors import ProblemFormatError

CSV_FIELDS = (
    "k",
    "phi_tilde",
    "grad_norm_sq",
    "res_dual",
    "res_primal_max",
    "eps_sum",
    "dist_p0",
    "step_norm",
    "proj_gap",
)

NAN = float("nan")


@dataclass
class IterationRecord:
    k: int
    phi_tilde: float
    grad_norm_sq: float
    res_dual: float
    res_primal_max: float
    eps_sum: float
    dist_p0: float
    step_norm: float = NAN
    proj_gap: float = NAN
    # in-memory only; None when the record was read back from CSV
    dist_next: Optional[float] = None
    tilde_gap_sq: Optional[float] = None
    weighted_gap_sq: Optional[float] = None
    criterion_slack: Tuple[float, ...] = field(default_factory=tuple)
    lambdas: Tuple[float, ...] = field(default_factory=tuple)
    # (eps + 1e-10 - Fenchel-Young gap) / scale per block with a conjugate pair
    subgradient_slack: Tuple[float, ...] = field(default_factory=tuple)
    projection_case: str = ""
    watch_phi_max: Optional[float] = None
    watch_w_max: Optional[float] = None
    watch_tol: Optional[float] = None
    returned: bool = False

    @property
    def has_step(self) -> bool:
        return not math.isnan(self.step_norm)

    def to_row(self) -> List[str]:
        return [str(self.k)] + [_fmt(getattr(self, name)) for name in CSV_FIELDS[1:]]


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    return format(float(value), ".17g")


def write_trace(records: Iterable[IterationRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for record in records:
            writer.writerow(record.to_row())
    return path


def read_trace(path: Union[str, Path]) -> List[IterationRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trace not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ProblemFormatError(f"{path} is empty")
        if tuple(header) != CSV_FIELDS:
            raise ProblemFormatError(f"{path} has header {header}, expected {list(CSV_FIELDS)}")
        records: List[IterationRecord] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_FIELDS):
                raise ProblemFormatError(f"{path}:{line_no}: expected {len(CSV_FIELDS)} columns")
            try:
                values = [float(v) for v in row[1:]]
                records.append(IterationRecord(int(row[0]), *values))
            except ValueError as e:
                raise ProblemFormatError(f"{path}:{line_no}: {e}") from e
    return records
