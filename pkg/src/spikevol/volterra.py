"""Product-integration numerics for weakly singular Volterra convolutions.

The single convolution engine used across the codebase: kernels are written
as k(u) = u**rho * w(u) with rho in (-1, 0] and a smooth factor w, so every
cell integral reduces to closed-form power moments against a piecewise
linear model of w and of the convolved density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import beta as beta_fn, betainc

from .grids import GridFunction, UniformGrid, cumulative_integral
from . import specfun
from .specfun import AlphaGamma


class SupercriticalError(ValueError):
    """Branching ratio >= 1: the resolvent equation has no summable solution."""


@dataclass(frozen=True)
class SingularKernel:
    """Kernel k(u) = u**rho * w(u) with smooth w; rho in (-1, 1]."""

    rho: float
    w: Callable[[np.ndarray], np.ndarray]
    name: str = "kernel"

    def __post_init__(self):
        if not self.rho > -1.0:
            raise ValueError("kernel exponent must exceed -1")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return u ** self.rho * self.w(u)


@dataclass(frozen=True)
class CompositeKernel:
    """Sum of singular kernels, convolved part by part.

    Used for kernels whose smooth factor has a power kink at the origin:
    peeling the leading power into its own exact part restores the scheme
    order on the first lag cell.
    """

    parts: tuple

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return sum(part(u) for part in self.parts)


def _const_factory(c: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda u: np.full_like(np.asarray(u, dtype=float), c)


def kernel_K(p: AlphaGamma) -> SingularKernel:
    return SingularKernel(p.alpha - 1.0, _const_factory(p.gamma / specfun.gamma_fn(p.alpha)), "K")


def kernel_LK(p: AlphaGamma) -> SingularKernel:
    c = 1.0 / (p.gamma * specfun.gamma_fn(1.0 - p.alpha))
    return SingularKernel(-p.alpha, _const_factory(c), "L_K")


def kernel_phi(alpha: float) -> SingularKernel:
    return SingularKernel(0.0, lambda u: specfun.hawkes_phi(alpha, u), "phi")


def kernel_ml_density(p: AlphaGamma, terms: int = 3) -> CompositeKernel:
    """The density f as a convolution kernel, expanded at the origin.

    f(u) = sum_{j>=1} (-1)**(j-1) gamma**j u**(j alpha - 1) / Gamma(j alpha);
    the first ``terms - 1`` powers become exact parts and the series tail
    (-1)**(terms-1) gamma**terms u**(terms*alpha - 1)
    E_{alpha, terms*alpha}(-gamma u**alpha) carries the rest, so the
    u**alpha kink of the Mittag-Leffler factor never meets a linear model
    until it is too small to matter.
    """
    a, g = p.alpha, p.gamma
    parts = []
    for j in range(1, terms):
        c = (-1.0) ** (j - 1) * g ** j * specfun.rgamma(j * a)
        parts.append(SingularKernel(j * a - 1.0, _const_factory(c), f"f[{j}]"))
    sign = (-1.0) ** (terms - 1)
    cg = g ** terms

    def w_tail(u, _a=a, _m=terms, _s=sign, _c=cg):
        u = np.asarray(u, dtype=float)
        return _s * _c * specfun.eval_ml_array(_a, _m * _a, -g * u ** _a)

    parts.append(SingularKernel(terms * a - 1.0, w_tail, "f[tail]"))
    return CompositeKernel(tuple(parts))


def kernel_from_grid_function(f: GridFunction) -> SingularKernel:
    """Wrap grid-sampled values as a kernel; w is interpolated from the nodes."""
    rho = f.singular_exponent if f.is_singular else 0.0
    nodes = f.grid.nodes

    if f.is_singular:
        w_nodes = np.empty_like(f.values)
        w_nodes[0] = f.values[0]
        w_nodes[1:] = f.values[1:] * nodes[1:] ** (-rho)
    else:
        w_nodes = f.values

    def w(u):
        return np.interp(np.asarray(u, dtype=float), nodes, w_nodes)

    return SingularKernel(rho, w, "grid")


def _power_moments(rho: float, a: np.ndarray, b: np.ndarray):
    """(I0, I1, I2) = integrals of u**(rho+m) over [a, b], m = 0, 1, 2."""
    out = []
    for m in range(3):
        p = rho + m + 1.0
        out.append((b ** p - a ** p) / p)
    return out


def conv_weights(kernel: SingularKernel, grid: UniformGrid):
    """Per-lag weights of the product-integration convolution.

    Contribution of source cell j to g(t_i), with lag m = i - j - 1:
    ``wa[m] * f_j + wb[m] * f_{j+1}`` where f is piecewise linear and the
    kernel's smooth factor is taken linear on each lag cell.
    """
    h = grid.h
    edges = grid.nodes
    a = edges[:-1]
    b = edges[1:]
    wa_nodes = np.empty(grid.steps + 1)
    w_at = kernel.w(edges[1:])
    wa_nodes[0] = float(kernel.w(np.array([0.0]))[0])
    wa_nodes[1:] = w_at
    wl = wa_nodes[:-1]
    wr = wa_nodes[1:]
    I0, I1, I2 = _power_moments(kernel.rho, a, b)
    # k(u) ~ u**rho * (wl + (wr - wl)(u - a)/h) on the lag cell
    P0 = wl * I0 + (wr - wl) / h * (I1 - a * I0)
    P1 = wl * (I1 - a * I0) + (wr - wl) / h * (I2 - 2 * a * I1 + a * a * I0)
    wb = P0 - P1 / h  # multiplies f at the node closer to t_i
    wa = P1 / h       # multiplies f at the node farther from t_i
    return wa, wb


def _singular_band(steps: int, rho: float) -> int:
    """Number of origin cells integrated in closed form for singular densities.

    The band must grow with the grid for the scheme to converge under
    refinement (with a fixed band the near-origin error is self-similar in
    units of h and never shrinks); sublinear growth keeps the closed-form
    work negligible next to the O(N^2) convolution itself.  Strongly
    singular kernels weight the origin region more heavily, so they get a
    deeper band.
    """
    q = 0.5 if rho <= -0.5 else 0.35
    return min(steps, max(16, int(round(steps ** q))))


def _band_cell_integral(kernel: SingularKernel, f: GridFunction, j: int,
                        targets: np.ndarray) -> np.ndarray:
    """Exact integral over source cell [s_j, s_{j+1}] for each target node.

    Both the kernel's power factor and the density's power factor are kept
    exact; the two smooth factors are taken linear on the cell, so every
    term is a power moment expressed through the incomplete beta function.
    """
    h = f.grid.h
    sigma = f.singular_exponent
    rho = kernel.rho
    a = j * h
    t = targets
    b = np.minimum((j + 1) * h, t)

    # density: s**sigma * (A + B s) from the weighted node values
    Wl = f.weighted_value(j)
    Wr = f.weighted_value(j + 1)
    B = (Wr - Wl) / h
    A = Wl - B * a

    # kernel smooth factor: C + D s, linear between u = t - a and u = t - b
    w_at_a = kernel.w(np.maximum(t - a, 0.0))
    w_at_b = kernel.w(np.maximum(t - b, 0.0))
    D = np.where(b > a, (w_at_b - w_at_a) / np.maximum(b - a, 1e-300), 0.0)
    C = w_at_a - D * a

    coef = (A * C, A * D + B * C, B * D)
    out = np.zeros_like(t)
    xa = np.clip(a / t, 0.0, 1.0)
    xb = np.clip(b / t, 0.0, 1.0)
    for m, c in enumerate(coef):
        q = sigma + m
        norm = beta_fn(q + 1.0, rho + 1.0)
        frac = betainc(q + 1.0, rho + 1.0, xb) - betainc(q + 1.0, rho + 1.0, xa)
        out += c * t ** (q + rho + 1.0) * norm * frac
    return out


def convolve_singular(kernel: SingularKernel, f: GridFunction) -> GridFunction:
    """g(t_i) = integral of kernel(t_i - s) f(s) ds over [0, t_i].

    Piecewise-linear density against exactly integrated kernel cells.  When
    the density carries a singular tag, the cells nearest the origin are
    integrated in closed form with both power factors exact, which keeps
    the scheme second order up to the singular endpoint.
    """
    if isinstance(kernel, CompositeKernel):
        out = convolve_singular(kernel.parts[0], f)
        for part in kernel.parts[1:]:
            out = GridFunction(out.grid, out.values + convolve_singular(part, f).values)
        return out

    grid = f.grid
    n = grid.steps
    h = grid.h
    wa, wb = conv_weights(kernel, grid)

    band = _singular_band(n, kernel.rho) if f.is_singular else 0

    fv = f.values.copy()
    if band:
        fv[: band + 1] = 0.0

    g = np.zeros(n + 1)
    # cell j contributes wa[m] f_j + wb[m] f_{j+1} at lag m = i - j - 1
    ca = np.convolve(wa, fv)[:n]
    cb = np.convolve(wb, fv[1:])[:n]
    g[1:] = ca + cb
    if band:
        # cell `band` lost its left endpoint when fv was zeroed
        g[band + 1 :] += wa[: n - band] * f.values[band]
        for j in range(band):
            lo = j + 1
            g[lo:] += _band_cell_integral(kernel, f, j, grid.nodes[lo:])
    return GridFunction(grid, g)


def solve_resolvent(beta: float, kernel: SingularKernel, grid: UniformGrid,
                    forcing_scale: float | None = None) -> GridFunction:
    """Resolvent of the second kind: R = beta*k + beta*(k * R) by time marching.

    The kernel must be bounded (rho = 0).  Implicit in the current node
    only, which keeps the scheme stable for beta < 1.
    """
    if not 0.0 <= beta:
        raise ValueError("beta must be nonnegative")
    if beta >= 1.0:
        raise SupercriticalError(f"branching ratio beta={beta} >= 1")
    if kernel.rho != 0.0:
        raise ValueError("solve_resolvent expects a bounded kernel")
    n = grid.steps
    if beta == 0.0:
        return GridFunction(grid, np.zeros(n + 1))
    wa, wb = conv_weights(kernel, grid)
    phi_nodes = kernel(np.maximum(grid.nodes, 0.0))
    phi_nodes[0] = float(kernel.w(np.array([0.0]))[0])
    R = np.zeros(n + 1)
    R[0] = beta * phi_nodes[0]
    denom = 1.0 - beta * wb[0]
    for i in range(1, n + 1):
        known = float(np.dot(wa[:i], R[i - 1 :: -1]))
        if i > 1:
            known += float(np.dot(wb[1:i], R[i - 1 : 0 : -1]))
        R[i] = (beta * phi_nodes[i] + beta * known) / denom
    return GridFunction(grid, R)


def resolvent_residual(beta: float, kernel: SingularKernel, R: GridFunction) -> float:
    """sup-norm of R - beta*k - beta*(k*R) over the grid nodes."""
    conv = convolve_singular(kernel, R)
    k_nodes = np.empty(R.grid.steps + 1)
    k_nodes[0] = float(kernel.w(np.array([0.0]))[0])
    k_nodes[1:] = kernel(R.grid.nodes[1:])
    defect = R.values - beta * k_nodes - beta * conv.values
    return float(np.max(np.abs(defect)))


class TwoParamResolvent:
    """Mean impact of an event with life-length y at horizon t.

    Stored through the running integral I(t) of the resolvent:
    ``evaluate(t, y) = 1{y > t} + I(t) - I((t - y)+)``.
    """

    def __init__(self, R: GridFunction):
        self.R = R
        self.integral = cumulative_integral(R)

    def integral_at(self, t) -> np.ndarray:
        """Exact integral of the piecewise-linear resolvent up to arbitrary t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        grid = self.R.grid
        h = grid.h
        tc = np.clip(t, 0.0, grid.horizon)
        idx = np.minimum((tc / h).astype(int), grid.steps - 1)
        t0 = idx * h
        frac = tc - t0
        r0 = self.R.values[idx]
        r1 = self.R.values[idx + 1]
        partial = r0 * frac + 0.5 * (r1 - r0) * frac * frac / h
        out = self.integral.values[idx] + partial
        return out if out.shape != (1,) else out

    def evaluate(self, t: float, y: float) -> float:
        if y <= 0:
            raise ValueError("y must be positive")
        ind = 1.0 if y > t else 0.0
        lo = max(t - y, 0.0)
        return float(ind + self.integral_at(t)[0] - self.integral_at(lo)[0])


def two_param(R: GridFunction) -> TwoParamResolvent:
    return TwoParamResolvent(R)


def limit_mean(p: AlphaGamma, v0: float, a: float, b: float, grid: UniformGrid) -> GridFunction:
    """Mean curve of the limit process: V0 (1 - F(t)) + (a/b) F(t)."""
    F = np.empty(grid.steps + 1)
    F[0] = 0.0
    F[1:] = specfun.ml_cdf(p, grid.nodes[1:])
    return GridFunction(grid, v0 * (1.0 - F) + (a / b) * F)


def prelimit_mean(chars, base_grid: UniformGrid, *, grid_cap: int = 2 ** 22,
                  fine_steps_per_unit: int | None = None):
    """Mean I_n of the rescaled prelimit intensity on the base grid.

    Solves the resolvent equation on [0, n*T], convolves against the decay
    of the initial impact, and rescales.  Returns (mean, resolvent_fine).
    """
    n = chars.n
    T = base_grid.horizon
    fine_steps = n * base_grid.steps if fine_steps_per_unit is None else int(fine_steps_per_unit * n * T)
    if fine_steps > grid_cap:
        raise ValueError(
            f"grid for n={n} needs {fine_steps} steps > cap {grid_cap}; shrink the horizon"
        )
    fine = UniformGrid(n * T, fine_steps)
    phi = kernel_phi(chars.alpha)
    R_n = solve_resolvent(chars.beta_n, phi, fine)
    scale = float(n) ** (2.0 * chars.alpha - 1.0)
    lam = chars.v0n * (1.0 + fine.nodes) ** (-chars.alpha)
    conv = convolve_singular(kernel_from_grid_function(R_n), GridFunction(fine, lam))
    IR = cumulative_integral(R_n)
    fine_vals = (chars.mu_n * (1.0 + IR.values) + lam + conv.values) / scale
    stride = fine_steps // base_grid.steps
    if stride * base_grid.steps == fine_steps:
        vals = fine_vals[:: stride]
    else:
        vals = np.interp(base_grid.nodes * n, fine.nodes, fine_vals)
    return GridFunction(base_grid, vals), R_n


def rescale_resolvent(R_n: GridFunction, n: int, alpha: float, base_grid: UniformGrid):
    """Return (R^(n), integral of R^(n)) on the base grid [0, T]."""
    if R_n.grid.horizon + 1e-9 < n * base_grid.horizon:
        raise ValueError("resolvent horizon does not cover n * T")
    scale = float(n) ** (1.0 - alpha)
    vals = scale * np.interp(base_grid.nodes * n, R_n.grid.nodes, R_n.values)
    Rn_scaled = GridFunction(base_grid, vals)
    return Rn_scaled, cumulative_integral(Rn_scaled)


def fit_envelope_constant(values: np.ndarray, envelope: np.ndarray) -> float:
    """Smallest C with values <= C * envelope pointwise (ratio maximum)."""
    mask = envelope > 0
    return float(np.max(values[mask] / envelope[mask]))


def verify_growth_bounds(p_alpha: float, resolvents: dict[int, GridFunction],
                         p_exponent: float = 2.0) -> dict:
    """Numeric check of the resolvent growth envelopes across an n-ladder.

    Fits the smallest constant per bound; the derivative bound uses central
    differences away from the origin and is reported as a diagnostic.
    """
    report: dict = {"alpha": p_alpha, "p": p_exponent, "per_n": {}, "bounds": {}}
    c_R, c_dR, c_int = [], [], []
    for n, R in sorted(resolvents.items()):
        t = R.grid.nodes
        env = (1.0 + t) ** (p_alpha - 1.0)
        cR = fit_envelope_constant(np.abs(R.values), env)
        h = R.grid.h
        interior = slice(2, R.grid.steps - 1)
        dR = (R.values[3:] - R.values[1:-2]) / (2 * h) if R.grid.steps > 3 else np.zeros(1)
        env_d = (1.0 + t[2:-1]) ** (p_alpha - 2.0)
        cdR = fit_envelope_constant(np.abs(dR), env_d) if R.grid.steps > 3 else 0.0
        IR = cumulative_integral(R)
        tt = t[1:]
        cint = fit_envelope_constant(IR.values[1:], tt ** p_alpha)
        report["per_n"][n] = {"C_resolvent": cR, "C_derivative": cdR, "C_integral": cint}
        c_R.append(cR)
        c_dR.append(cdR)
        c_int.append(cint)
    for key, vals in (("resolvent", c_R), ("derivative", c_dR), ("integral", c_int)):
        vals = np.asarray(vals)
        report["bounds"][key] = {
            "fitted_C": float(vals.max()),
            "stable_factor": float(vals.max() / max(vals.min(), 1e-300)),
        }
    report["derivative_note"] = "central-difference diagnostic, not part of the model contract"
    return report
