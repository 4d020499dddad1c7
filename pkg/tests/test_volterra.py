import math

import numpy as np
import pytest
from scipy.integrate import quad

from spikevol import specfun, volterra
from spikevol.grids import GridFunction, UniformGrid
from spikevol.specfun import AlphaGamma

P = AlphaGamma(0.75, 1.0)


def _grid_function_K(p, grid):
    vals = np.concatenate(
        [[p.gamma / specfun.gamma_fn(p.alpha)], specfun.kernel_k(p, grid.nodes[1:])])
    return GridFunction(grid, vals, singular_exponent=p.alpha - 1.0)


def _grid_function_f(p, grid):
    vals = np.concatenate(
        [[p.gamma / specfun.gamma_fn(p.alpha)], specfun.ml_density(p, grid.nodes[1:])])
    return GridFunction(grid, vals, singular_exponent=p.alpha - 1.0)


def test_first_kind_identity_lk_conv_k():
    grid = UniformGrid(2.0, 1024)
    conv = volterra.convolve_singular(volterra.kernel_LK(P), _grid_function_K(P, grid))
    resid = np.abs(conv.values[2:] - 1.0)
    assert np.max(resid) < 2e-2


def test_second_kind_identity_k_equals_f_plus_f_conv_k():
    grid = UniformGrid(2.0, 1024)
    Kf = _grid_function_K(P, grid)
    conv = volterra.convolve_singular(volterra.kernel_ml_density(P), Kf)
    lhs = specfun.kernel_k(P, grid.nodes[2:])
    rhs = specfun.ml_density(P, grid.nodes[2:]) + conv.values[2:]
    weighted = np.abs(lhs - rhs) * grid.nodes[2:] ** (1.0 - P.alpha)
    assert np.max(weighted) < 2e-2


def test_identity_residuals_shrink_under_refinement():
    errs = []
    for steps in (512, 1024, 2048):
        grid = UniformGrid(2.0, steps)
        conv = volterra.convolve_singular(
            volterra.kernel_LK(P), _grid_function_K(P, grid))
        errs.append(np.max(np.abs(conv.values[2:] - 1.0)))
    for a, b in zip(errs, errs[1:]):
        assert 1.5 <= a / b <= 2.5


def test_exp_kernel_resolvent_closed_form():
    # kernel e^{-t}, beta = 1/2: resolvent is (1/2) e^{-t/2}
    grid = UniformGrid(4.0, 2048)
    ker = volterra.SingularKernel(0.0, lambda u: np.exp(-u), name="exp")
    R = volterra.solve_resolvent(0.5, ker, grid)
    exact = 0.5 * np.exp(-0.5 * grid.nodes)
    assert np.max(np.abs(R.values - exact)) < 1e-6


def test_resolvent_residual_small():
    grid = UniformGrid(2.0, 512)
    ker = volterra.SingularKernel(0.0, lambda u: np.exp(-u), name="exp")
    R = volterra.solve_resolvent(0.9, ker, grid)
    assert volterra.resolvent_residual(0.9, ker, R) < 1e-8


def test_resolvent_supercritical_raises():
    grid = UniformGrid(1.0, 64)
    ker = volterra.SingularKernel(0.0, lambda u: np.ones_like(u), name="one")
    with pytest.raises(volterra.SupercriticalError):
        volterra.solve_resolvent(1.5, ker, grid)


def test_two_param_resolvent_against_quadrature():
    # R(t, y) = 1_{y > t} + int_{(t-y)+}^{t} R for the exp-kernel resolvent
    grid = UniformGrid(2.0, 2048)
    ker = volterra.SingularKernel(0.0, lambda u: np.exp(-u), name="exp")
    R = volterra.solve_resolvent(0.5, ker, grid)
    two = volterra.two_param(R)
    rng = np.random.default_rng(5)
    worst = 0.0
    for t, y in zip(rng.uniform(0.05, 2.0, 100), rng.uniform(0.01, 3.0, 100)):
        lo = max(t - y, 0.0)
        val, _ = quad(lambda s: 0.5 * math.exp(-0.5 * s), lo, t, epsabs=1e-12)
        expect = (1.0 if y > t else 0.0) + val
        worst = max(worst, abs(two.evaluate(t, y) - expect))
    assert worst < 1e-6


def test_limit_mean_endpoints_and_monotone():
    grid = UniformGrid(3.0, 256)
    mean = volterra.limit_mean(P, 1.0, 0.5, 1.0, grid)
    assert mean.values[0] == pytest.approx(1.0)
    # V0 = 1 relaxes monotonically toward a/b = 0.5
    assert np.all(np.diff(mean.values) < 0)
    assert mean.values[-1] > 0.5


def test_prelimit_mean_converges_to_limit():
    from spikevol import hawkes

    params_like = type("L", (), dict(
        alpha=0.75, a=0.5, b=1.0, V0=1.0, lambda_m_star=1.0,
        zeta_l_star=0.5, lambda_l_star=1.0))()
    grid = UniformGrid(1.0, 128)
    lim = volterra.limit_mean(P, 1.0, 0.5, 1.0, grid).values
    d = []
    for n in (10, 40):
        chars = hawkes.characteristics_from_limit(params_like, n)
        mean_n, _ = volterra.prelimit_mean(chars, grid, fine_steps_per_unit=80)
        d.append(np.max(np.abs(mean_n.values - lim)))
    assert d[1] < d[0]


def test_kernel_ml_density_matches_pointwise():
    ker = volterra.kernel_ml_density(P)
    t = np.geomspace(1e-4, 2.0, 50)
    np.testing.assert_allclose(ker(t), specfun.ml_density(P, t), rtol=1e-10)


def test_composite_kernel_convolution_additive():
    grid = UniformGrid(1.0, 128)
    f = GridFunction(grid, np.sin(grid.nodes) + 1.0)
    kA = volterra.SingularKernel(0.0, lambda u: np.exp(-u), name="A")
    kB = volterra.SingularKernel(-0.25, lambda u: np.ones_like(u), name="B")
    comp = volterra.CompositeKernel((kA, kB))
    direct = volterra.convolve_singular(comp, f).values
    parts = (volterra.convolve_singular(kA, f).values
             + volterra.convolve_singular(kB, f).values)
    np.testing.assert_allclose(direct, parts, atol=1e-14)


def test_fit_envelope_constant():
    t = np.linspace(0.1, 2.0, 50)
    envelope = 1.0 + t ** 0.5
    values = 3.0 * envelope
    assert volterra.fit_envelope_constant(values, envelope) == pytest.approx(3.0)
