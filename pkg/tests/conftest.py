import math
import random

import pytest
from hypothesis import strategies as st

from hiercubes.core import LatticeParams, TableModel

MAX_TABLE_LEVEL = {1: 7, 2: 4, 3: 3}


def random_table(rng: random.Random, d: int, length: int | None = None) -> TableModel:
    """Small random activity table; zero entries appear now and then."""
    if length is None:
        length = rng.randint(1, MAX_TABLE_LEVEL[d] + 1)
    z = []
    for _ in range(length):
        z.append(0.0 if rng.random() < 0.15 else rng.uniform(0.05, 3.0))
    if all(x == 0 for x in z):
        z[0] = 1.0
    return TableModel(tuple(z))


@st.composite
def tables(draw, dims=(1, 2, 3)):
    d = draw(st.sampled_from(dims))
    length = draw(st.integers(1, MAX_TABLE_LEVEL[d] + 1))
    z = draw(st.lists(st.one_of(st.just(0.0), st.floats(0.05, 3.0)), min_size=length, max_size=length))
    if all(x == 0 for x in z):
        z[0] = 1.0
    return LatticeParams(d), TableModel(tuple(z))


@st.composite
def profiles(draw, max_norm=1.0, allow_condensed=True):
    """Valid density profiles: rho_j >= 0, sum + sigma_inf <= max_norm."""
    from hiercubes.density import DensityProfile
    k = draw(st.integers(1, 6))
    weights = draw(st.lists(st.floats(0.0, 1.0), min_size=k + 1, max_size=k + 1))
    total = draw(st.floats(0.0, max_norm))
    s = sum(weights)
    if s == 0:
        weights = [1.0] + [0.0] * k
        s = 1.0
    parts = [w / s * total for w in weights]
    sigma_inf = parts[-1] if allow_condensed else 0.0
    return DensityProfile.from_rho(parts[:-1], sigma_inf)


@pytest.fixture
def d1():
    return LatticeParams(1)


@pytest.fixture
def d2():
    return LatticeParams(2)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


LOG2 = math.log(2.0)
