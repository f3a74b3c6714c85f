"""Hypothesis strategies shared by the property tests."""

import numpy as np
from hypothesis import strategies as st

from distatt.so3 import random_rotation
from distatt.topology import random_tree

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.lists(finite, min_size=3, max_size=3).map(np.array)
mat3 = st.lists(finite, min_size=9, max_size=9).map(lambda x: np.array(x).reshape(3, 3))
seeds = st.integers(0, 2**32 - 1)
rotations = seeds.map(lambda s: random_rotation(np.random.default_rng(s)))


@st.composite
def unit_vectors(draw):
    v = draw(vec3)
    n = np.linalg.norm(v)
    if n < 1e-3:
        v, n = np.array([0.0, 0.0, 1.0]), 1.0
    return v / n


@st.composite
def trees(draw, max_agents=8):
    n = draw(st.integers(2, max_agents))
    return random_tree(n, np.random.default_rng(draw(seeds)))
