import math

import numpy as np
import pytest
from scipy import integrate

from spikevol import riccati, specfun, sve
from spikevol.grids import UniformGrid, GridFunction

ALPHA = 0.75

PARAMS = sve.LimitParams(
    alpha=ALPHA, a=0.5, b=1.0, V0=1.0,
    zeta_m_star=0.5, lambda_m_star=1.0,
    zeta_l_star=0.5, lambda_l_star=1.0,
)


def _f_grid_function(params, grid, scale=1.0):
    p = params.alpha_gamma
    vals = np.empty(grid.steps + 1)
    vals[0] = scale * p.gamma / specfun.gamma_fn(params.alpha)
    vals[1:] = scale * specfun.ml_density(p, grid.nodes[1:])
    return GridFunction(grid, vals, singular_exponent=params.alpha - 1.0)


# ---------------------------------------------------------------------------
# degenerate inputs


def test_zero_input_gives_zero_solution_and_unit_laplace():
    grid = UniformGrid(1.0, 256)
    sol = riccati.solve_riccati(PARAMS, grid, lam=0.0)
    assert sol.converged
    assert np.all(sol.psi.values == 0.0)
    assert sol.residual == 0.0
    out = riccati.laplace_functional(PARAMS, grid, lam=0.0, solution=sol)
    assert out["value"] == 1.0
    assert out["exponent"] == 0.0


def test_negative_inputs_rejected():
    grid = UniformGrid(1.0, 64)
    with pytest.raises(ValueError):
        riccati.solve_riccati(PARAMS, grid, lam=-0.1)
    with pytest.raises(ValueError):
        riccati.solve_riccati(PARAMS, grid, lam=0.5, g=-1.0)


# ---------------------------------------------------------------------------
# jump symbol


def test_v_operator_zero_input():
    grid = UniformGrid(1.0, 128)
    zero = GridFunction(grid, np.zeros(grid.steps + 1),
                        singular_exponent=ALPHA - 1.0)
    assert np.all(riccati.v_operator(PARAMS, zero) == 0.0)


def test_v_operator_nonnegative():
    grid = UniformGrid(1.0, 256)
    psi = _f_grid_function(PARAMS, grid, scale=0.3)
    out = riccati.v_operator(PARAMS, psi)
    assert np.all(out >= 0.0)


def test_v_operator_matches_quadrature_for_ml_input():
    # with psi = c * f the running integral is c * F exactly, so the jump
    # symbol has a closed-form integrand we can integrate independently
    grid = UniformGrid(1.0, 512)
    c = 0.4
    p = PARAMS.alpha_gamma
    psi = _f_grid_function(PARAMS, grid, scale=c)
    out = riccati.v_operator(PARAMS, psi)

    def reference(t):
        Ft = specfun.ml_cdf(p, t)
        # dense log+linear mark grid; the integrand behaves like y**(-alpha)
        # near the origin, which trapezoid on a log grid resolves well
        yg = np.concatenate([np.geomspace(1e-10, 1e-3, 2000),
                             np.linspace(1e-3, t, 20000)[1:]])
        z = PARAMS.c3 * c * (Ft - specfun.ml_cdf(p, t - yg))
        integ = (np.expm1(-z) + z) * ALPHA * (1.0 + ALPHA) * yg ** (-ALPHA - 2.0)
        interior = float(np.trapezoid(integ, yg))
        zt = PARAMS.c3 * c * Ft
        tail = (np.expm1(-zt) + zt) * ALPHA * t ** (-ALPHA - 1.0)
        return PARAMS.c4 * (interior + tail)

    for t in (0.25, 0.5, 1.0):
        k = grid.index_of(t)
        assert out[k] == pytest.approx(reference(t), rel=2e-2)


# ---------------------------------------------------------------------------
# the solver


def test_small_g_linearizes_to_scaled_cdf():
    grid = UniformGrid(1.0, 512)
    eps = 1e-3
    sol = riccati.solve_riccati(PARAMS, grid, lam=0.0, g=eps)
    assert sol.converged
    ref = eps * specfun.ml_cdf(PARAMS.alpha_gamma, grid.nodes[1:])
    assert np.max(np.abs(sol.psi.values[1:] - ref)) < 20.0 * eps ** 2


@pytest.mark.parametrize("lam,g", [(0.5, None), (1.0, 0.2), (2.0, 1.0)])
def test_solution_bracket_and_contraction(lam, g):
    grid = UniformGrid(1.0, 512)
    sol = riccati.solve_riccati(PARAMS, grid, lam=lam, g=g)
    assert sol.converged
    assert sol.residual < 1e-9
    vals = sol.psi.values
    assert np.all(vals >= 0.0)
    # upper bracket: the nonlinear term only ever subtracts mass
    p = PARAMS.alpha_gamma
    upper = lam * specfun.ml_density(p, grid.nodes[1:])
    if g is not None:
        upper = upper + g * specfun.ml_cdf(p, grid.nodes[1:])
    assert np.all(vals[1:] <= upper * (1.0 + 1e-9) + 1e-15)
    # Picard increments decay geometrically once contracting
    tail = sol.increments[1:6]
    ratios = [b / a for a, b in zip(tail, tail[1:]) if a > 0]
    assert max(ratios) < 0.9


def test_origin_behaviour_matches_theory():
    grid = UniformGrid(1.0, 2048)
    sol = riccati.solve_riccati(PARAMS, grid, lam=1.0)
    assert sol.origin_theory == pytest.approx(
        PARAMS.gamma / specfun.gamma_fn(ALPHA))
    assert sol.origin_measured == pytest.approx(sol.origin_theory, rel=0.02)


def test_grid_refinement_converges():
    sols = [riccati.solve_riccati(PARAMS, UniformGrid(1.0, n), lam=1.0, g=0.2)
            for n in (256, 512, 1024)]
    ref = sols[-1].psi.values[-1]
    errs = [abs(s.psi.values[-1] - ref) for s in sols[:-1]]
    assert errs[1] < 0.7 * errs[0]


# ---------------------------------------------------------------------------
# the Laplace functional


def test_laplace_value_in_unit_interval_and_decreasing_in_lam():
    grid = UniformGrid(1.0, 512)
    vals = []
    for lam in (0.0, 0.5, 1.0, 2.0):
        out = riccati.laplace_functional(PARAMS, grid, lam=lam, g=0.2)
        assert 0.0 < out["value"] <= 1.0
        vals.append(out["value"])
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_laplace_exponent_components_consistent():
    grid = UniformGrid(1.0, 512)
    out = riccati.laplace_functional(PARAMS, grid, lam=0.7, g=0.3)
    expo = PARAMS.V0 * out["lk_psi_T"] + (PARAMS.a / PARAMS.b) * out["int_psi"]
    assert out["exponent"] == pytest.approx(expo, rel=1e-12)
    assert out["value"] == pytest.approx(math.exp(-expo), rel=1e-12)


def test_stable_identity_agrees_with_direct_convolution():
    # (L_K * psi)(T) computed through the resolvent identity must agree with
    # brute-force quadrature against the power-law first-kind kernel
    grid = UniformGrid(1.0, 1024)
    lam = 0.8
    sol = riccati.solve_riccati(PARAMS, grid, lam=lam, g=0.2)
    out = riccati.laplace_functional(PARAMS, grid, lam=lam, g=0.2, solution=sol)
    T = grid.horizon
    pref = 1.0 / (PARAMS.gamma * specfun.gamma_fn(1.0 - ALPHA))

    def smooth(s):
        # psi(s) * s**(1-alpha) stays bounded through the origin
        if s == 0.0:
            return pref * sol.psi.weighted_origin()
        return pref * sol.psi(s) * s ** (1.0 - ALPHA)

    direct, _ = integrate.quad(smooth, 0.0, T, weight="alg",
                               wvar=(ALPHA - 1.0, -ALPHA), limit=400)
    assert out["lk_psi_T"] == pytest.approx(direct, rel=1e-3)
