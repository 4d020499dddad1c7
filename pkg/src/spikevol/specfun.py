"""Special functions and probability laws of the spiked rough-volatility model.

Covers the Mittag-Leffler function E_{alpha,beta} on the real line, the
Mittag-Leffler probability density/CDF, the power kernels K and L_K with
their resolvent identities, the Hawkes excitation kernel phi, and the
life-length laws of limit-order impacts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import rgamma


class PrecisionUnreachable(RuntimeError):
    """Raised when a series cannot meet the target tolerance.

    Carries the best available estimate and an error bound.
    """

    def __init__(self, estimate: float, bound: float):
        super().__init__(f"precision-unreachable: estimate={estimate!r}, bound={bound!r}")
        self.estimate = estimate
        self.bound = bound


@dataclass(frozen=True)
class AlphaGamma:
    """Roughness index alpha and Mittag-Leffler rate gamma.

    The model requires alpha in (1/2, 1); plain evaluation is permitted on
    (0, 1] via ``model_valid=False``.
    """

    alpha: float
    gamma: float
    model_valid: bool = True

    def __post_init__(self):
        if self.model_valid:
            if not (0.5 < self.alpha < 1.0):
                raise ValueError("alpha must lie in (1/2, 1)")
        else:
            if not (0.0 < self.alpha <= 1.0):
                raise ValueError("alpha must lie in (0, 1]")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class EvalPolicy:
    """Switch-over and convergence policy for Mittag-Leffler evaluation."""

    series_cutoff: float = 5.0
    asymptotic_cutoff: float = 30.0
    target_abs_tol: float = 1e-12
    max_terms: int = 400

    def __post_init__(self):
        if not self.target_abs_tol > 0:
            raise ValueError("target_abs_tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_POLICY = EvalPolicy()


def _ml_series(alpha: float, beta: float, x: float, policy: EvalPolicy) -> float:
    total = rgamma(beta)
    term = 1.0
    for n in range(1, policy.max_terms + 1):
        term *= x
        inc = term * rgamma(alpha * n + beta)
        total += inc
        if abs(inc) < policy.target_abs_tol and abs(term * rgamma(alpha * (n + 1) + beta)) < policy.target_abs_tol:
            return total
    raise PrecisionUnreachable(total, abs(term))


def _ml_series_vec(alpha: float, beta: float, x: np.ndarray, policy: EvalPolicy) -> np.ndarray:
    """Power series over an array of arguments inside the series region."""
    total = np.full_like(x, rgamma(beta))
    term = np.ones_like(x)
    for n in range(1, policy.max_terms + 1):
        term = term * x
        inc = term * rgamma(alpha * n + beta)
        total += inc
        if np.max(np.abs(inc)) < policy.target_abs_tol and np.max(np.abs(term)) * abs(
            rgamma(alpha * (n + 1) + beta)
        ) < policy.target_abs_tol:
            return total
    raise PrecisionUnreachable(float(total.flat[0]), float(np.max(np.abs(term))))


def eval_ml_array(alpha: float, beta: float, x, policy: EvalPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Vectorized :func:`eval_ml`; fast path when all arguments sit in the series region."""
    x = np.asarray(x, dtype=float)
    if x.size and float(np.min(x)) >= -policy.series_cutoff:
        return _ml_series_vec(alpha, beta, x, policy)
    return np.array([eval_ml(alpha, beta, xi, policy) for xi in np.ravel(x)]).reshape(x.shape)


def _ml_asymptotic_negative(alpha: float, beta: float, x: float, policy: EvalPolicy) -> float | None:
    # E_{a,b}(x) ~ -sum_{k>=1} x^{-k} / Gamma(b - a k) for x -> -inf; the
    # series is asymptotic, so truncate at the smallest term.  Returns None
    # when the smallest term cannot meet the tolerance.
    total = 0.0
    prev = math.inf
    xk = 1.0
    for k in range(1, 60):
        xk *= x
        term = -rgamma(beta - alpha * k) / xk
        if term == 0.0:
            # b - a k hit a pole of Gamma; the term vanishes but carries no
            # information about where the asymptotic tail starts growing.
            continue
        if abs(term) > prev:
            if prev > policy.target_abs_tol:
                return None
            break
        total += term
        prev = abs(term)
        if prev < policy.target_abs_tol:
            break
    return total


def _ml_bridge_negative(alpha: float, beta: float, x: float) -> float:
    # Real-axis integral representation for negative arguments, 0 < alpha < 1:
    # the spectral function of E_{alpha,beta} integrated over (0, inf).
    sa = math.sin(math.pi * alpha)
    s1 = math.sin(math.pi * (1.0 - beta))
    s2 = math.sin(math.pi * (1.0 - beta + alpha))

    def integrand(r: float) -> float:
        num = r * s1 - x * s2
        den = r * r - 2.0 * r * x * math.cos(math.pi * alpha) + x * x
        return (
            (1.0 / (math.pi * alpha))
            * r ** ((1.0 - beta) / alpha)
            * math.exp(-r ** (1.0 / alpha))
            * num
            / den
        )

    val, _ = quad(integrand, 0.0, np.inf, limit=400, epsabs=1e-14, epsrel=1e-12)
    return val


def eval_ml(alpha: float, beta: float, x: float, policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Mittag-Leffler function E_{alpha,beta}(x) for real x.

    Power series for moderate arguments, the negative-axis asymptotic
    expansion for large negative x, and a real-axis integral representation
    bridging the gap in between.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if x >= -policy.series_cutoff:
        return _ml_series(alpha, beta, x, policy)
    if alpha == 1.0:
        # exp(x) scaled; the integral bridge assumes alpha < 1
        return _ml_series(alpha, beta, x, EvalPolicy(max_terms=2000))
    if x <= -policy.asymptotic_cutoff:
        val = _ml_asymptotic_negative(alpha, beta, x, policy)
        if val is not None:
            return val
    return _ml_bridge_negative(alpha, beta, x)


def ml_density(p: AlphaGamma, t) -> float | np.ndarray:
    """Mittag-Leffler density gamma * t**(alpha-1) * E_{a,a}(-gamma t**alpha).

    Diverges like gamma * t**(alpha-1) / Gamma(alpha) as t -> 0+; t = 0 is a
    domain error, callers needing the singular factor should use
    ``ml_density_weighted``.
    """
    scalar = np.isscalar(t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("ml_density requires t > 0")
    e = eval_ml_array(p.alpha, p.alpha, -p.gamma * t ** p.alpha)
    out = p.gamma * t ** (p.alpha - 1.0) * e
    return float(out[0]) if scalar else out


def ml_density_weighted(p: AlphaGamma, t) -> float | np.ndarray:
    """t**(1-alpha) * f(t), finite down to t = 0 where it equals gamma/Gamma(alpha)."""
    scalar = np.isscalar(t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    e = eval_ml_array(p.alpha, p.alpha, -p.gamma * t ** p.alpha)
    out = p.gamma * e
    return float(out[0]) if scalar else out


def ml_cdf(p: AlphaGamma, t) -> float | np.ndarray:
    """F(t) = 1 - E_{alpha,1}(-gamma t**alpha), in [0, 1]."""
    scalar = np.isscalar(t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("ml_cdf requires t >= 0")
    out = 1.0 - eval_ml_array(p.alpha, 1.0, -p.gamma * t ** p.alpha)
    return float(out[0]) if scalar else np.clip(out, 0.0, 1.0)


def kernel_k(p: AlphaGamma, t) -> float | np.ndarray:
    """K(t) = gamma * t**(alpha-1) / Gamma(alpha)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("kernel_k requires t > 0")
    return p.gamma * t ** (p.alpha - 1.0) / gamma_fn(p.alpha)


def kernel_k_integral(p: AlphaGamma, t) -> float | np.ndarray:
    """Antiderivative of K: gamma * t**alpha / Gamma(alpha + 1)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return p.gamma * t ** p.alpha / gamma_fn(p.alpha + 1.0)


def resolvent_first_kind(p: AlphaGamma, t) -> float | np.ndarray:
    """L_K(t) = t**(-alpha) / (gamma * Gamma(1 - alpha)); satisfies L_K * K = 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("resolvent_first_kind requires t > 0")
    return t ** (-p.alpha) / (p.gamma * gamma_fn(1.0 - p.alpha))


def hawkes_phi(alpha: float, t) -> float | np.ndarray:
    """Excitation kernel phi(t) = alpha * (1 + t)**(-alpha - 1); integrates to 1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("hawkes_phi requires t >= 0")
    out = alpha * (1.0 + t) ** (-alpha - 1.0)
    return float(out) if out.ndim == 0 else out


def hawkes_phi_integral(alpha: float, t) -> float | np.ndarray:
    """Antiderivative of phi: 1 - (1 + t)**(-alpha)."""
    t = np.asarray(t, dtype=float)
    out = 1.0 - (1.0 + t) ** (-alpha)
    return float(out) if out.ndim == 0 else out


def lifetime_density(alpha: float, y) -> float | np.ndarray:
    """Life-length density (1 + alpha) * (1 + y)**(-alpha - 2) on y >= 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("lifetime_density requires y >= 0")
    out = (1.0 + alpha) * (1.0 + y) ** (-alpha - 2.0)
    return float(out) if out.ndim == 0 else out


def lifetime_tail(alpha: float, x) -> float | np.ndarray:
    """Tail (1 + x)**(-alpha - 1) of the life-length law."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("lifetime_tail requires x >= 0")
    out = (1.0 + x) ** (-alpha - 1.0)
    return float(out) if out.ndim == 0 else out


def sample_lifetime(alpha: float, u) -> float | np.ndarray:
    """Inverse-CDF sampler: u in (0,1) -> u**(-1/(alpha+1)) - 1."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    out = u ** (-1.0 / (alpha + 1.0)) - 1.0
    return float(out) if out.ndim == 0 else out


def limit_mark_tail(alpha: float, x) -> float | np.ndarray:
    """Tail of the limiting mark measure: alpha * x**(-alpha-1) for x > 0.

    The measure has infinite mass near 0, so x = 0 is a domain error.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("limit_mark_tail requires x > 0")
    out = alpha * x ** (-alpha - 1.0)
    return float(out) if out.ndim == 0 else out


def limit_mark_mean_alive(alpha: float, y_min: float, a: float, b: float) -> float:
    """Expected alive time in the relative window [a, b] for a mark conditioned y >= y_min.

    The probability a mark with tail alpha*x**(-alpha-1) (truncated at
    y_min) is still alive at relative age u is min(1, (u/y_min)**(-alpha-1));
    this integrates that survival probability over [a, b] in closed form.
    """
    if not 0 <= a <= b:
        raise ValueError("need 0 <= a <= b")

    def antideriv(u: float) -> float:
        if u <= y_min:
            return u
        return y_min + (y_min - y_min ** (alpha + 1.0) * u ** (-alpha)) / alpha

    return antideriv(b) - antideriv(a)


def sample_limit_mark(alpha: float, y_min: float, u) -> float | np.ndarray:
    """Inverse-tail sampler of the limiting mark law truncated at y_min."""
    u = np.asarray(u, dtype=float)
    out = y_min * u ** (-1.0 / (alpha + 1.0))
    return float(out) if out.ndim == 0 else out
