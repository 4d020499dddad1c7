"""Nonlinear fractional Volterra-Riccati equation for the Laplace functional.

The exponent process psi solves

    psi = lam * f + g * f - phi_nl(psi) * f,
    phi_nl(psi) = (c2**2 / 2) psi**2 + (V o psi),

where f is the Mittag-Leffler density kernel and (V o psi) is the jump
symbol: the integral of exp(-z) - 1 + z against the limiting mark measure,
z being the window increment of the running integral of psi scaled by c3.
The Laplace functional of the limit process is then

    E exp(-lam V(T) - int g(T-s) V(s) ds)
        = exp(-V0 * (L_K * psi)(T) - (a/b) * int_0^T psi),

with L_K * psi evaluated through the first-kind resolvent identity
L_K * f = 1 - F, which avoids convolving against the blowing-up kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from . import specfun, volterra
from .grids import UniformGrid, GridFunction, cumulative_integral
from .sve import LimitParams


@dataclass
class RiccatiSolution:
    grid: UniformGrid
    psi: GridFunction
    phi_nl: GridFunction
    residual: float
    increments: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    origin_theory: float = 0.0

    @property
    def origin_measured(self) -> float:
        """t**(1-alpha) psi(t) read off at the first interior node."""
        return self.psi.weighted_value(1)


def _coerce_g(g, grid: UniformGrid) -> np.ndarray:
    if g is None:
        return np.zeros(grid.steps + 1)
    if np.isscalar(g):
        return np.full(grid.steps + 1, float(g))
    if callable(g):
        return np.asarray(g(grid.nodes), dtype=float)
    arr = np.asarray(g, dtype=float)
    if arr.shape != (grid.steps + 1,):
        raise ValueError("g array must have one value per grid node")
    return arr


def _entire_g(z: np.ndarray) -> np.ndarray:
    """exp(-z) - 1 + z, stable for small z."""
    return np.expm1(-z) + z


def v_operator(params: LimitParams, psi: GridFunction) -> np.ndarray:
    """(V o psi) at the grid nodes.

    Tail marks y >= t_k see the whole running integral and integrate in
    closed form; interior mark cells use their exact measure mass at the
    midpoint window; the first mark cell uses the small-z quadratic limit
    with the y**2 moment of the mark measure integrated exactly.
    """
    grid = psi.grid
    al = params.alpha
    c3, c4 = params.c3, params.c4
    n = grid.steps
    h = grid.h
    t = grid.nodes
    Psi = cumulative_integral(psi).values

    out = np.zeros(n + 1)
    if c4 == 0.0 or c3 == 0.0:
        return out

    # tail y >= t_k: z is constant in y, tail mass is alpha * t_k**(-al-1)
    out[1:] = c4 * _entire_g(c3 * Psi[1:]) * al * t[1:] ** (-al - 1.0)

    # first mark cell (0, h): z ~ c3 y psi(t_k), second moment exact
    mom2 = al * (1.0 + al) * h ** (1.0 - al) / (1.0 - al)
    out[1:] += c4 * 0.5 * (c3 * psi.values[1:]) ** 2 * mom2

    if n >= 2:
        # interior mark cells [t_j, t_{j+1}], j = 1..k-1, midpoint window
        mass = al * (t[1:-1] ** (-al - 1.0) - t[2:] ** (-al - 1.0))  # cell j=1..n-1
        Psim = 0.5 * (Psi[:-1] + Psi[1:])  # Psi at the midpoint of cell i
        Z = c3 * (Psi[:, None] - Psim[None, :])  # window from cell i's midpoint to t_k
        GZ = _entire_g(np.maximum(Z, 0.0))
        # the window lower end for mark cell j at node k sits in cell i = k-j-1,
        # so weight[k, i] = mass[j] with j = k-i-1 in [1, k-1]
        col = np.zeros(n + 1)
        col[2:] = mass[: n - 1]
        W = toeplitz(col, np.zeros(n))
        out += c4 * np.einsum("ki,ki->k", GZ, W)
    return out


def solve_riccati(params: LimitParams, grid: UniformGrid, lam: float,
                  g=None, tol: float = 1e-10, max_iter: int = 400) -> RiccatiSolution:
    """Picard iteration started from the exact upper bracket lam*f + g*f.

    Every iterate is projected back into [0, lam*f + g*f], which the true
    solution satisfies because the subtracted term is nonnegative, so the
    iteration is monotone-safe even before it contracts.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    p = params.alpha_gamma
    al = params.alpha
    n = grid.steps
    gv = _coerce_g(g, grid)
    if np.any(gv < 0):
        raise ValueError("g must be nonnegative")

    ker_f = volterra.kernel_ml_density(p)
    f_nodes = np.zeros(n + 1)
    f_nodes[1:] = specfun.ml_density(p, grid.nodes[1:])
    g_gf = GridFunction(grid, gv)
    gf_conv = volterra.convolve_singular(ker_f, g_gf)

    origin = lam * p.gamma / specfun.gamma_fn(al)
    base = np.empty(n + 1)
    base[0] = origin
    base[1:] = lam * f_nodes[1:] + gf_conv.values[1:]
    rho_sq = 2.0 * al - 2.0
    half_c2sq = 0.5 * params.c2 ** 2

    def phi_nl_of(psi: GridFunction) -> GridFunction:
        vals = np.empty(n + 1)
        vals[0] = half_c2sq * psi.values[0] ** 2
        vals[1:] = half_c2sq * psi.values[1:] ** 2 + v_operator(params, psi)[1:]
        return GridFunction(grid, vals, singular_exponent=rho_sq)

    psi = GridFunction(grid, base.copy(), singular_exponent=al - 1.0)
    increments: list[float] = []
    converged = False
    it = 0
    phi = phi_nl_of(psi)
    for it in range(1, max_iter + 1):
        corr = volterra.convolve_singular(ker_f, phi)
        new = base - corr.values
        new[0] = origin
        np.clip(new[1:], 0.0, base[1:], out=new[1:])
        incr = float(np.max(np.abs(new[1:] - psi.values[1:])))
        increments.append(incr)
        psi = GridFunction(grid, new, singular_exponent=al - 1.0)
        phi = phi_nl_of(psi)
        if incr <= tol:
            converged = True
            break

    corr = volterra.convolve_singular(ker_f, phi)
    resid = float(np.max(np.abs(psi.values[1:] - (base[1:] - corr.values[1:]))))
    return RiccatiSolution(
        grid=grid, psi=psi, phi_nl=phi, residual=resid,
        increments=increments, iterations=it, converged=converged,
        origin_theory=origin,
    )


def laplace_functional(params: LimitParams, grid: UniformGrid, lam: float,
                       g=None, solution: RiccatiSolution | None = None) -> dict:
    """Laplace transform value and its exponent components.

    Returns value = exp(-V0 * (L_K * psi)(T) - (a/b) * Psi(T)) together
    with both exponent pieces; L_K * psi is evaluated through
    lam * (1 - F) + (1 - F) * (g - phi_nl).
    """
    if solution is None:
        solution = solve_riccati(params, grid, lam, g)
    p = params.alpha_gamma
    gv = _coerce_g(g, grid)
    one_minus_F = SingularKernelOneMinusF(p)

    dens_vals = gv - solution.phi_nl.values
    dens_vals[0] = -solution.phi_nl.values[0]
    dens = GridFunction(grid, dens_vals, singular_exponent=solution.phi_nl.singular_exponent)
    conv = volterra.convolve_singular(one_minus_F, dens)

    T = grid.horizon
    lk_psi_T = lam * (1.0 - specfun.ml_cdf(p, T)) + conv.values[-1]
    int_psi = cumulative_integral(solution.psi).values[-1]
    exponent = params.V0 * lk_psi_T + (params.a / params.b) * int_psi
    return {
        "value": math.exp(-exponent),
        "exponent": exponent,
        "lk_psi_T": lk_psi_T,
        "int_psi": int_psi,
        "solution": solution,
    }


def SingularKernelOneMinusF(p: specfun.AlphaGamma) -> volterra.SingularKernel:
    """1 - F as a bounded (rho = 0) convolution kernel."""
    return volterra.SingularKernel(
        0.0, lambda u: 1.0 - specfun.ml_cdf(p, np.asarray(u, dtype=float)),
        name="1-F",
    )
