from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from gapbench.diffusion import make_model
from gapbench.graph import build_graph
from gapbench.instances import gen_random

settings.register_profile("gapbench", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gapbench")


@st.composite
def small_models(draw, kinds=("ICM", "LTM", "MIXTURE"), max_n=6, max_edges=7):
    """Random rational triggering models small enough for brute force."""
    n = draw(st.integers(2, max_n))
    kind = draw(st.sampled_from(kinds))
    seed = draw(st.integers(0, 2 ** 31))
    density = draw(st.sampled_from([0.2, 0.35, 0.5]))
    return gen_random(n, density, kind, seed, max_edges=max_edges)


@pytest.fixture
def path3():
    """0 → 1 → 2 with weights 1/2 and 1/3."""
    g = build_graph(3, None, [(0, 1, Fraction(1, 2)), (1, 2, Fraction(1, 3))])
    return g


@pytest.fixture
def edgeless4():
    return make_model(build_graph(4), "ICM")
