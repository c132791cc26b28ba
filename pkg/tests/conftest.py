import numpy as np
import pytest

from cpsattack.dynamics import build_augmented
from cpsattack.pipeline import kalman_design, lqg_design
from cpsattack.plant import load_bundled

from modelzoo import random_model


@pytest.fixture(scope="session")
def osc():
    return load_bundled("oscillator2")


@pytest.fixture(scope="session")
def carts():
    return load_bundled("coupled4")


@pytest.fixture(scope="session")
def osc_loop(osc):
    fg = kalman_design(osc)
    cg = lqg_design(osc)
    return osc, fg, cg, build_augmented(osc, fg, cg)


@pytest.fixture(scope="session")
def carts_loop(carts):
    fg = kalman_design(carts)
    cg = lqg_design(carts)
    return carts, fg, cg, build_augmented(carts, fg, cg)


@pytest.fixture(scope="session")
def rng_models():
    rng = np.random.default_rng(2024)
    return [random_model(rng) for _ in range(10)]
