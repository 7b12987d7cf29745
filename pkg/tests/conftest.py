# tests/conftest.py
import sys
from pathlib import Path

# Add the project root to Python path so we can import splitting and cli modules
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest

from splitting.product_space import DenseLinearMap, LinearOpFamily
from splitting.problems import lasso_from_data, make_lasso


@pytest.fixture
def scalar_family():
    """n = 2 family on R with G_1 = 2."""
    return LinearOpFamily([DenseLinearMap(np.array([[2.0]]))], 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar_lasso():
    """min |z| + 1/2 (z - 2)^2, solved by z* = 1 with w1* = 1."""
    return lasso_from_data([[1.0]], [2.0], 1.0)


@pytest.fixture
def small_lasso():
    return make_lasso(8, 4, 0.5, seed=0)


@pytest.fixture
def isolated_home(tmp_path, monkeypatch):
    """Keep config.json writes and PS_* variables away from the real user."""
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.setattr(Path, "home", classmethod(lambda cls: tmp_path))
    for var in ("PS_SEED", "PS_TRACE_DIR", "PS_SIGMA", "PS_GAMMA", "PS_MAX_ITER"):
        monkeypatch.delenv(var, raising=False)
    return tmp_path
