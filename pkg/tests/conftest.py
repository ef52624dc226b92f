from __future__ import annotations

import numpy as np
import pytest

from steertile.planner import PlanningInstance, build_tree
from steertile.profile import ModelFamily, ModelProfile, default_binning
from steertile.synthetic import analytic_family


def flat_profile(name: str, side: int, value: float, mean: float = 100.0, p99: float = 120.0) -> ModelProfile:
    return ModelProfile(name, side, mean, p99, tuple([value] * 22), default_binning())


def random_instance(rng: np.random.Generator, depth: int, n_models: int, budget: int,
                    integer: bool = True, zero_fraction: float = 0.4) -> tuple:
    """Seeded knapsack instance over a quad-tree; returns (instance, tree)."""
    tree = build_tree(depth)
    n = len(tree)
    if integer:
        acc = rng.integers(1, 50, size=(n, n_models)).astype(float)
    else:
        acc = rng.random((n, n_models))
    acc[rng.random((n, n_models)) < zero_fraction] = 0.0
    lo = max(1, budget // 5)
    lat = tuple(int(x) for x in rng.integers(lo, budget // 2 + 2, size=n_models))
    names = tuple(f"M{i + 1}" for i in range(n_models))
    inst = PlanningInstance(acc, lat, budget, 1.0, names, tuple(float(x) for x in lat))
    return inst, tree


@pytest.fixture(scope="session")
def family() -> ModelFamily:
    return analytic_family()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
