"""Uniform time grids and grid-sampled functions.

Functions with a power singularity at t=0 (such as the Mittag-Leffler
density, which blows up like t**(alpha-1)) are stored in weighted form on
the first node: if ``singular_exponent`` is rho, ``values[0]`` holds the
finite limit of t**(-rho) * f(t) as t -> 0+, while all other entries hold
plain node values f(t_i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class UniformGrid:
    """Nodes t_i = i * h, i = 0..steps, with h = horizon / steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.steps < 2:
            raise ValueError("grid needs at least 2 steps")

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.h

    def refined(self, factor: int = 2) -> "UniformGrid":
        return UniformGrid(self.horizon, self.steps * factor)

    def index_of(self, t: float) -> int:
        """Nearest node index for t in [0, horizon]."""
        if t < -1e-12 or t > self.horizon * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        return int(round(t / self.h))


class GridFunction:
    """Values of a scalar function on a :class:`UniformGrid`."""

    def __init__(self, grid: UniformGrid, values, singular_exponent: float | None = None):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.steps + 1,):
            raise ValueError("values length must be steps + 1")
        if singular_exponent is not None and not (-1.0 < singular_exponent <= 0.0):
            raise ValueError("singular_exponent must lie in (-1, 0]")
        self.grid = grid
        self.values = values
        self.singular_exponent = singular_exponent

    @property
    def is_singular(self) -> bool:
        return self.singular_exponent is not None and self.singular_exponent < 0.0

    def interior(self) -> np.ndarray:
        """Plain node values from t_1 on (always finite)."""
        return self.values[1:]

    def weighted_origin(self) -> float:
        """lim t**(-rho) f(t) at the origin (rho = 0 for regular functions)."""
        return float(self.values[0])

    def weighted_value(self, j: int) -> float:
        """t_j**(-rho) * f(t_j); equals the plain value for regular functions."""
        if j == 0 or not self.is_singular:
            return float(self.values[j])
        return float(self.values[j] * (j * self.grid.h) ** (-self.singular_exponent))

    def __call__(self, t):
        """Piecewise-linear evaluation away from the first cell.

        On the first cell the stored power model w(t) * t**rho is used so
        singular functions evaluate finitely for t > 0.
        """
        t = np.asarray(t, dtype=float)
        h = self.grid.h
        out = np.interp(t, self.grid.nodes, np.where(np.isfinite(self.values), self.values, 0.0))
        if self.is_singular:
            rho = self.singular_exponent
            first = (t > 0) & (t < h)
            if np.any(first):
                w0 = self.values[0]
                w1 = self.values[1] * h ** (-rho)
                tf = t[first] if t.ndim else t
                w = w0 + (w1 - w0) * tf / h
                val = w * tf ** rho
                if t.ndim:
                    out[first] = val
                else:
                    out = val
        return out

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.grid.steps == other.grid.steps
            and abs(self.grid.horizon - other.grid.horizon) <= 1e-12 * self.grid.horizon
        )


def cumulative_integral(f: GridFunction) -> GridFunction:
    """Running integral of f, exact for the piecewise-linear model.

    The first cell uses the weighted power model when f is singular, so
    the integral stays finite and first-order accurate near 0.
    """
    h = f.grid.h
    vals = f.values
    out = np.empty_like(vals)
    out[0] = 0.0
    if f.is_singular:
        rho = f.singular_exponent
        w0 = vals[0]
        w1 = vals[1] * h ** (-rho)
        # integral of t**rho * (w0 + (w1 - w0) t / h) over [0, h]
        first = w0 * h ** (rho + 1) / (rho + 1) + (w1 - w0) * h ** (rho + 1) / (rho + 2)
    else:
        first = 0.5 * h * (vals[0] + vals[1])
    out[1] = first
    if len(vals) > 2:
        out[2:] = first + np.cumsum(0.5 * h * (vals[1:-1] + vals[2:]))
    return GridFunction(f.grid, out)
