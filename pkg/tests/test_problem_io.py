import json

import numpy as np
import pytest

from splitting.errors import ProblemFormatError
from splitting.problem_io import FORMAT_TAG, load_problem, problem_from_dict, problem_to_dict, save_problem
from splitting.problems import make_affine_feasibility, make_fused, make_skew_saddle
from splitting.product_space import GammaMetric
from splitting.ps_core import SolverConfig, solve


def _same_trace(a, b, iters=25):
    cfg = SolverConfig(max_iter=iters, rho_tol=0.0)
    ra, rb = solve(a, cfg), solve(b, cfg)
    return [r.to_row() for r in ra.trace] == [r.to_row() for r in rb.trace]


def test_saved_fused_problem_solves_identically(tmp_path):
    problem = make_fused(8, 5, 0.4, seed=2)
    path = save_problem(problem, tmp_path / "fused.json")
    loaded = load_problem(path)
    assert loaded.name == "fused"
    assert loaded.dims == problem.dims
    assert loaded.params == problem.params
    np.testing.assert_allclose(loaded.oracle.z_star, problem.oracle.z_star)
    assert _same_trace(problem, loaded)


def test_saved_skew_problem_keeps_its_split(tmp_path):
    problem = make_skew_saddle(4, seed=1)
    loaded = load_problem(save_problem(problem, tmp_path / "skew.json"))
    split = loaded.blocks[1]
    assert split.is_split
    assert split.F.regularity == problem.blocks[1].F.regularity
    assert split.F.modulus == pytest.approx(problem.blocks[1].F.modulus)
    np.testing.assert_allclose(loaded.blocks[0].T.box.upper, np.ones(4))
    assert loaded.oracle.unique == problem.oracle.unique


def test_affine_oracle_is_rebuilt_from_blocks():
    problem = make_affine_feasibility(4, seed=3)
    data = json.loads(json.dumps(problem_to_dict(problem)))
    assert data["format"] == FORMAT_TAG
    assert data["oracle"] == {"kind": "affine"}
    loaded = problem_from_dict(data)
    metric = GammaMetric(1.0)
    p0 = problem.initial_point()
    np.testing.assert_allclose(loaded.oracle.project(p0, metric).z,
                               problem.oracle.project(p0, metric).z, atol=1e-12)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_problem(tmp_path / "nope.json")


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ProblemFormatError):
        load_problem(path)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="something-else"),
    lambda d: d.update(dims=[99, 99]),
    lambda d: d["blocks"].pop(),
    lambda d: d["blocks"][0]["T"].update(kind="mystery"),
    lambda d: d["blocks"][0]["T"].pop("mu"),
    lambda d: d["family"][0].update(kind="sparse"),
    lambda d: d.update(oracle={"kind": "unknown"}),
])
def test_malformed_documents_are_rejected(mutate):
    data = json.loads(json.dumps(problem_to_dict(make_fused(6, 4, 0.5, seed=0))))
    mutate(data)
    with pytest.raises(ProblemFormatError):
        problem_from_dict(data)
