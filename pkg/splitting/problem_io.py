"""
JSON problem files ("ps-problem/1").

A file carries the linear-map family as dense matrices, one entry per block
with the resolvent operator T and an optional forward/backward split, and the
oracle data needed to rebuild the solution reference without re-running the
reference solvers.
"""

import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from splitting.errors import ProblemFormatError
from splitting.operator_kit import (
    AffineOperator,
    AffineSubspaceNormalCone,
    Box,
    BoxNormalCone,
    ForwardOracle,
    L1Subdifferential,
    LinearForward,
    MonotoneOracle,
    OperatorBlock,
    ProjectableSet,
    QuadraticGradient,
    WholeSpace,
    ZeroOperator,
)
from splitting.problems import AffineFeasibilityOracle, ProblemInstance, ProblemOracle
from splitting.product_space import DenseLinearMap, LinearMap, LinearOpFamily

FORMAT_TAG = "ps-problem/1"


def _bounds(values: List[Optional[float]], fill: float) -> np.ndarray:
    return np.array([fill if v is None else float(v) for v in values], dtype=float)


MONOTONE_DECODERS: Dict[str, Callable[[Dict[str, Any]], MonotoneOracle]] = {
    "zero": lambda d: ZeroOperator(),
    "l1": lambda d: L1Subdifferential(d["mu"]),
    "box_normal_cone": lambda d: BoxNormalCone(_bounds(d["lower"], -np.inf),
                                               _bounds(d["upper"], np.inf)),
    "affine_normal_cone": lambda d: AffineSubspaceNormalCone(d["A"], d["b"]),
    "affine": lambda d: AffineOperator(d["M"], d["q"]),
}

FORWARD_DECODERS: Dict[str, Callable[[Dict[str, Any]], ForwardOracle]] = {
    "linear_forward": lambda d: LinearForward(d["M"], d["q"], modulus=d.get("modulus"),
                                              regularity=d.get("regularity")),
    "quadratic_gradient": lambda d: QuadraticGradient(d["A"], d["b"], modulus=d.get("modulus")),
}

SET_DECODERS: Dict[str, Callable[[Dict[str, Any]], ProjectableSet]] = {
    "whole": lambda d: WholeSpace(),
    "box": lambda d: Box(_bounds(d["lower"], -np.inf), _bounds(d["upper"], np.inf)),
}


def _decode(table: Dict[str, Callable[[Dict[str, Any]], Any]], data: Any, where: str) -> Any:
    if not isinstance(data, dict) or "kind" not in data:
        raise ProblemFormatError(f"{where}: expected an object with a 'kind' tag")
    kind = data["kind"]
    if kind not in table:
        raise ProblemFormatError(f"{where}: unknown kind '{kind}' (known: {sorted(table)})")
    try:
        return table[kind](data)
    except KeyError as e:
        raise ProblemFormatError(f"{where}: missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ProblemFormatError(f"{where}: {e}") from e


# ---------------------------
# Encoding
# ---------------------------

def _encode_map(op: LinearMap) -> Dict[str, Any]:
    if not isinstance(op, DenseLinearMap):
        raise ProblemFormatError(f"only dense linear maps can be saved, got {type(op).__name__}")
    return {"kind": "dense", "matrix": op.matrix.tolist(), "norm": op.norm()}


def _encode_block(block: OperatorBlock) -> Dict[str, Any]:
    entry: Dict[str, Any] = {
        "label": block.label,
        "T": block.T.describe() if block.T is not None else None,
        "split": None,
    }
    if block.is_split:
        entry["split"] = {"F": block.F.describe(), "B": block.B.describe(),
                          "C": block.C.describe()}
    return entry


def problem_to_dict(problem: ProblemInstance) -> Dict[str, Any]:
    family = problem.family
    return {
        "format": FORMAT_TAG,
        "name": problem.name,
        "params": problem.params,
        "dims": list(problem.dims),
        "family": [_encode_map(family.ops[i]) for i in range(family.n - 1)],
        "blocks": [_encode_block(b) for b in problem.blocks],
        "oracle": problem.oracle.to_dict() if problem.oracle is not None else None,
    }


def save_problem(problem: ProblemInstance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(problem_to_dict(problem), indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------
# Decoding
# ---------------------------

def _decode_block(entry: Any, i: int) -> OperatorBlock:
    where = f"blocks[{i}]"
    if not isinstance(entry, dict):
        raise ProblemFormatError(f"{where}: expected an object")
    T = _decode(MONOTONE_DECODERS, entry["T"], f"{where}.T") if entry.get("T") else None
    split = entry.get("split")
    if split is None:
        if T is None:
            raise ProblemFormatError(f"{where}: needs T or a split")
        return OperatorBlock(T=T, label=entry.get("label", ""))
    return OperatorBlock(
        T=T,
        F=_decode(FORWARD_DECODERS, split.get("F"), f"{where}.split.F"),
        B=_decode(MONOTONE_DECODERS, split.get("B", {"kind": "zero"}), f"{where}.split.B"),
        C=_decode(SET_DECODERS, split.get("C", {"kind": "whole"}), f"{where}.split.C"),
        label=entry.get("label", ""),
    )


def _decode_oracle(data: Optional[Dict[str, Any]],
                   blocks: List[OperatorBlock]) -> Optional[ProblemOracle]:
    if data is None:
        return None
    kind = data.get("kind")
    if kind == "affine":
        T1, T2 = blocks[0].T, blocks[1].T
        if not (isinstance(T1, AffineSubspaceNormalCone) and isinstance(T2, AffineSubspaceNormalCone)):
            raise ProblemFormatError("affine oracle needs two affine_normal_cone blocks")
        return AffineFeasibilityOracle(T1.A, T1.b, T2.A, T2.b)
    if kind == "singleton":
        try:
            return ProblemOracle(
                z_star=np.array(data["z_star"], dtype=float),
                w_star=tuple(np.array(w, dtype=float) for w in data["w_star"]),
                unique=bool(data.get("unique", True)),
            )
        except KeyError as e:
            raise ProblemFormatError(f"oracle: missing field {e}") from e
    raise ProblemFormatError(f"oracle: unknown kind '{kind}'")


def problem_from_dict(data: Dict[str, Any]) -> ProblemInstance:
    if not isinstance(data, dict) or data.get("format") != FORMAT_TAG:
        raise ProblemFormatError(f"not a {FORMAT_TAG} document")
    try:
        dims = [int(d) for d in data["dims"]]
        maps = []
        for i, entry in enumerate(data["family"]):
            if entry.get("kind") != "dense":
                raise ProblemFormatError(f"family[{i}]: unknown kind '{entry.get('kind')}'")
            maps.append(DenseLinearMap(np.array(entry["matrix"], dtype=float),
                                       norm_hint=entry.get("norm")))
        family = LinearOpFamily(maps, dims[0])
        blocks = [_decode_block(entry, i) for i, entry in enumerate(data["blocks"])]
    except KeyError as e:
        raise ProblemFormatError(f"missing field {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ProblemFormatError):
            raise
        raise ProblemFormatError(str(e)) from e
    if tuple(dims) != family.dims:
        raise ProblemFormatError(f"dims {dims} disagree with the family {list(family.dims)}")
    if len(blocks) != family.n:
        raise ProblemFormatError(f"{len(blocks)} blocks for a family of {family.n} maps")
    return ProblemInstance(
        name=data.get("name", "problem"),
        family=family,
        blocks=blocks,
        oracle=_decode_oracle(data.get("oracle"), blocks),
        params=dict(data.get("params", {})),
    )


def load_problem(path: Union[str, Path]) -> ProblemInstance:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Problem file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ProblemFormatError(f"{path}: invalid JSON ({e})") from e
    return problem_from_dict(data)
