import functools
from pathlib import Path

import numpy as np
import pytest

from tilq import ProblemSpec, feedback, solve_all

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
CASE_I = ("case_i_a", "case_i_b", "case_i_c")
PASSING = CASE_I + ("case_ii", "large_beta")


@functools.lru_cache(maxsize=None)
def load(name, n_steps=None):
    return ProblemSpec.load(CONFIGS / f"{name}.json", n_steps=n_steps)


@functools.lru_cache(maxsize=None)
def solved(name, n_steps=None):
    spec = load(name, n_steps)
    sol = solve_all(spec)
    return spec, sol, feedback(spec, sol)


def small_spec(n_steps=200, **overrides):
    """Scalar-control, two-noise instance used across modules."""
    constants = dict(G1=2.0, G2=1.5, h1=1.2, h2=0.8, lam1=0.5, lam2=0.3, mu1=0.4, mu2=-0.2)
    constants.update({k: overrides.pop(k) for k in list(overrides) if k in constants})
    funcs = dict(A=0.1, B1=[0.2], B2=[0.1], C=[0.2, 1.0], D1=[[1.0], [0.0]], D2=[[0.5], [0.0]],
                 b=0.3, sigma=[0.2, 0.1], Q1=1.0, Q2=0.8, R1=[[1.0]], R2=[[0.7]])
    funcs.update(overrides)
    x0 = funcs.pop("x0", 1.0)
    return ProblemSpec.from_functions(1, 2, 1.0, n_steps, x0=x0, constants=constants, **funcs)


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
