import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikevol.grids import GridFunction, UniformGrid, cumulative_integral


def test_uniform_grid_basics():
    g = UniformGrid(2.0, 8)
    assert g.h == 0.25
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert len(g.nodes) == 9
    np.testing.assert_allclose(g.midpoints, g.nodes[:-1] + 0.125)


def test_refined_doubles_steps():
    g = UniformGrid(1.0, 16)
    r = g.refined()
    assert r.steps == 32 and r.horizon == 1.0


def test_grid_function_regular_interpolation():
    g = UniformGrid(1.0, 4)
    f = GridFunction(g, np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
    assert f(0.375) == pytest.approx(1.5)
    assert not f.is_singular


def test_grid_function_singular_first_cell_model():
    # f(t) = t**(-0.5): weighted origin value 1, power model on cell one
    g = UniformGrid(1.0, 8)
    vals = np.concatenate([[1.0], g.nodes[1:] ** -0.5])
    f = GridFunction(g, vals, singular_exponent=-0.5)
    t = 0.3 * g.h
    assert f(t) == pytest.approx(t ** -0.5, rel=1e-12)
    assert f.weighted_value(3) == pytest.approx(1.0)


def test_singular_exponent_range_enforced():
    g = UniformGrid(1.0, 4)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(5), singular_exponent=-1.0)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(4))


def test_cumulative_integral_exact_for_linear():
    g = UniformGrid(2.0, 64)
    f = GridFunction(g, 3.0 * g.nodes + 1.0)
    expected = 1.5 * g.nodes ** 2 + g.nodes
    np.testing.assert_allclose(cumulative_integral(f).values, expected, atol=1e-14)


def test_cumulative_integral_singular_power():
    # integral of t**(-0.5) is 2 sqrt(t); the first cell is exact by the
    # power model, the trapezoid tail error decays under refinement
    errs = []
    for steps in (256, 1024):
        g = UniformGrid(1.0, steps)
        vals = np.concatenate([[1.0], g.nodes[1:] ** -0.5])
        f = GridFunction(g, vals, singular_exponent=-0.5)
        out = cumulative_integral(f).values
        exact = 2.0 * np.sqrt(g.nodes)
        assert out[1] == pytest.approx(exact[1], rel=1e-12)
        errs.append(np.max(np.abs(out - exact)))
    assert errs[0] < 3e-3
    assert errs[1] < 0.55 * errs[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=64), st.floats(0.1, 10.0))
def test_index_of_consistent(steps, horizon):
    g = UniformGrid(horizon, steps)
    for j in range(steps + 1):
        assert g.index_of(g.nodes[j]) == j
