"""Exact simulation of the prelimit marked Hawkes volatility model.

The intensity V feels three contributions on top of the baseline: the
decaying initial impact Lambda_n(t) = V0n (1+t)**(-alpha), the excitation
phi(t - tau) of past market orders, and one unit of zeta_l for every limit
order still alive.  Between state changes V is nonincreasing, which makes
Ogata thinning exact with the last post-change value as dominating rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import rng, specfun
from .grids import UniformGrid, GridFunction

EXPLOSION_GUARD = 10_000_000


class ExplosionGuardError(RuntimeError):
    """Raised when a single path exceeds the configured event cap."""


@dataclass(frozen=True)
class PrelimitCharacteristics:
    """Characteristics of the n-th prelimit model."""

    mu_n: float
    v0n: float
    zeta_m: float
    lambda_m: float
    zeta_l: float
    lambda_l: float
    alpha: float
    n: int

    def __post_init__(self):
        for name in ("mu_n", "v0n", "zeta_m", "lambda_m", "zeta_l", "lambda_l"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (0.5 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (1/2, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.beta_n < 1.0:
            raise ValueError(f"branching ratio beta_n={self.beta_n} must be < 1")

    @property
    def beta_n(self) -> float:
        return self.zeta_m * self.lambda_m + self.zeta_l * self.lambda_l


def characteristics_from_limit(limit, n: int) -> PrelimitCharacteristics:
    """Prelimit characteristics scaling toward the given limit parameters.

    zeta_l, lambda_l, mu and V0 follow the power scalings in n; the market
    pair keeps lambda_m fixed and absorbs the branching-ratio requirement
    beta_n = 1 - b n**(-alpha) into zeta_m.
    """
    if limit.lambda_m_star <= 0:
        raise ValueError("lambda_m_star must be positive")
    al = limit.alpha
    zeta_l = limit.zeta_l_star * float(n) ** (al - 1.0)
    lambda_l = limit.lambda_l_star * float(n) ** (1.0 - al)
    beta_n = 1.0 - limit.b * float(n) ** (-al)
    zeta_m = (beta_n - zeta_l * lambda_l) / limit.lambda_m_star
    if zeta_m < 0:
        raise ValueError(f"n={n} too small for this limit vector (zeta_m < 0)")
    return PrelimitCharacteristics(
        mu_n=limit.a * float(n) ** (al - 1.0),
        v0n=limit.V0 * float(n) ** (2.0 * al - 1.0),
        zeta_m=zeta_m,
        lambda_m=limit.lambda_m_star,
        zeta_l=zeta_l,
        lambda_l=lambda_l,
        alpha=al,
        n=n,
    )


@dataclass
class EventLog:
    """Event streams of one simulated path."""

    market_times: np.ndarray
    limit_times: np.ndarray
    life_lengths: np.ndarray
    horizon: float


@dataclass
class IntensityPath:
    """The intensity V sampled on a grid, with event-time values."""

    times: np.ndarray
    values: np.ndarray
    event_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    event_left: np.ndarray = field(default_factory=lambda: np.empty(0))
    event_right: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class PricePath:
    """Piecewise-constant logarithmic price driven by market-order marks."""

    initial: float
    jump_times: np.ndarray
    marks: np.ndarray

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cum = np.concatenate([[0.0], np.cumsum(self.marks)])
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self.initial + cum[idx]


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, inline="always")
def _heap_push(heap, size, val):
    heap[size] = val
    i = size
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(heap, size):
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and heap[left + 1] < heap[left]:
            child = left + 1
        if heap[i] <= heap[child]:
            break
        heap[i], heap[child] = heap[child], heap[i]
        i = child
    return size


@njit(cache=True, inline="always")
def _intensity(t, mu, v0n, zeta_m, zeta_l, alpha, market, n_market, alive):
    v = mu + v0n * (1.0 + t) ** (-alpha)
    for k in range(n_market):
        v += zeta_m * alpha * (1.0 + t - market[k]) ** (-alpha - 1.0)
    return v + zeta_l * alive


@njit(cache=True, inline="always")
def _accept_test(threshold, s, zeta_m, alpha, market, n_market):
    """Exact evaluation of ``zeta_m * sum(phi(s - tau)) >= threshold``.

    Iterates recent events first (largest terms) and exits as soon as the
    comparison is decided; older terms are bounded by the current one, so a
    rejection can also stop early.
    """
    if threshold <= 0.0:
        return True
    if zeta_m <= 0.0 or n_market == 0:
        return False
    partial = 0.0
    for k in range(n_market - 1, -1, -1):
        term = zeta_m * alpha * (1.0 + s - market[k]) ** (-alpha - 1.0)
        partial += term
        if partial >= threshold:
            return True
        if partial + term * k < threshold:
            return False
    return False


@njit(cache=True)
def _simulate_path(state, mu, v0n, zeta_m, lambda_m, zeta_l, lambda_l, alpha,
                   horizon, sample_times, samples_out, max_events):
    """One exact Hawkes path; fills samples_out and returns the event log.

    ``v_last`` is maintained as an upper bound of V (exact at anchor
    points): jumps add to it, expiries subtract zeta_l, rejections tighten
    it to u*v_last, and a full O(events) re-anchor runs every few accepted
    events.  The thinning acceptance test itself is exact, so the law of
    the simulated point process is exact as well.

    Returns (n_market, n_limit, market_times, limit_times, life_lengths,
    guard_tripped).
    """
    cap = 1024
    market = np.empty(cap, dtype=np.float64)
    ltimes = np.empty(cap, dtype=np.float64)
    llives = np.empty(cap, dtype=np.float64)
    heap = np.empty(cap, dtype=np.float64)
    n_market = 0
    n_limit = 0
    heap_size = 0

    rate_c = lambda_m + alpha * lambda_l
    p_market = lambda_m / rate_c if rate_c > 0 else 0.0
    anchor_every = 16

    t_last = 0.0
    v_last = _intensity(0.0, mu, v0n, zeta_m, zeta_l, alpha, market, 0, 0.0)
    sample_idx = 0
    n_samples = sample_times.shape[0]
    total_events = 0
    since_anchor = 0
    guard = False

    while True:
        next_expiry = heap[0] if heap_size > 0 else np.inf
        if rate_c * v_last > 0.0:
            state, u = rng.next_uniform(state)
            s = t_last - np.log(u) / (rate_c * v_last)
        else:
            s = np.inf

        t_next = min(s, next_expiry)
        stop = min(t_next, horizon)
        while sample_idx < n_samples and sample_times[sample_idx] <= stop:
            ts = sample_times[sample_idx]
            samples_out[sample_idx] = _intensity(
                ts, mu, v0n, zeta_m, zeta_l, alpha, market, n_market, float(heap_size)
            )
            sample_idx += 1
        if t_next > horizon:
            break

        if next_expiry < s:
            heap_size = _heap_pop(heap, heap_size)
            t_last = next_expiry
            v_last -= zeta_l  # V drops by exactly zeta_l; bound stays valid
            continue

        state, u2 = rng.next_uniform(state)
        base = mu + v0n * (1.0 + s) ** (-alpha) + zeta_l * heap_size
        if _accept_test(u2 * v_last - base, s, zeta_m, alpha, market, n_market):
            total_events += 1
            if total_events > max_events:
                guard = True
                break
            state, u3 = rng.next_uniform(state)
            if u3 < p_market:
                if n_market == market.shape[0]:
                    grown = np.empty(2 * market.shape[0], dtype=np.float64)
                    grown[: n_market] = market
                    market = grown
                market[n_market] = s
                n_market += 1
                v_last += zeta_m * alpha
            else:
                state, u4 = rng.next_uniform(state)
                life = u4 ** (-1.0 / (alpha + 1.0)) - 1.0
                if n_limit == ltimes.shape[0]:
                    g1 = np.empty(2 * ltimes.shape[0], dtype=np.float64)
                    g1[: n_limit] = ltimes
                    ltimes = g1
                    g2 = np.empty(2 * llives.shape[0], dtype=np.float64)
                    g2[: n_limit] = llives
                    llives = g2
                ltimes[n_limit] = s
                llives[n_limit] = life
                n_limit += 1
                if heap_size == heap.shape[0]:
                    g3 = np.empty(2 * heap.shape[0], dtype=np.float64)
                    g3[:heap_size] = heap
                    heap = g3
                heap_size = _heap_push(heap, heap_size, s + life)
                v_last += zeta_l
            since_anchor += 1
            if since_anchor >= anchor_every:
                v_last = _intensity(
                    s, mu, v0n, zeta_m, zeta_l, alpha, market, n_market, float(heap_size)
                )
                since_anchor = 0
        else:
            # V(s) < u2 * v_last and V is nonincreasing until the next jump
            v_last = u2 * v_last
        t_last = s

    return n_market, n_limit, market, ltimes, llives, guard


@njit(cache=True, parallel=True)
def _simulate_ensemble(seed, mu, v0n, zeta_m, lambda_m, zeta_l, lambda_l, alpha,
                       horizon, sample_times, n_paths, max_events):
    out = np.empty((n_paths, sample_times.shape[0]), dtype=np.float64)
    guards = np.zeros(n_paths, dtype=np.int64)
    for p in prange(n_paths):
        state = rng.stream_state(seed, p)
        res = _simulate_path(
            state, mu, v0n, zeta_m, lambda_m, zeta_l, lambda_l, alpha,
            horizon, sample_times, out[p], max_events,
        )
        if res[5]:
            guards[p] = 1
    return out, guards


# ---------------------------------------------------------------------------
# public API


def simulate_hawkes(chars: PrelimitCharacteristics, T: float, seed: int,
                    sample_times=None, max_events: int = EXPLOSION_GUARD):
    """Simulate one path on [0, T]; returns (EventLog, IntensityPath)."""
    if T <= 0:
        raise ValueError("T must be positive")
    if sample_times is None:
        sample_times = np.linspace(0.0, T, 257)
    sample_times = np.asarray(sample_times, dtype=float)
    samples = np.empty(sample_times.shape[0], dtype=float)
    # stream_state boxes its uint64 result to a Python int; re-wrap so the
    # jitted path routine unboxes it as uint64 instead of overflowing int64.
    state = np.uint64(rng.stream_state(seed, 0))
    n_m, n_l, market, ltimes, llives, guard = _simulate_path(
        state, chars.mu_n, chars.v0n, chars.zeta_m, chars.lambda_m,
        chars.zeta_l, chars.lambda_l, chars.alpha, T, sample_times, samples,
        max_events,
    )
    log = EventLog(
        market_times=market[:n_m].copy(),
        limit_times=ltimes[:n_l].copy(),
        life_lengths=llives[:n_l].copy(),
        horizon=T,
    )
    if guard:
        raise ExplosionGuardError(
            f"path exceeded {max_events} events; partial log discarded at t≈{market[n_m-1] if n_m else 0.0}"
        )
    ev_times, ev_left, ev_right = _event_values(log, chars)
    path = IntensityPath(sample_times, samples, ev_times, ev_left, ev_right)
    return log, path


def intensity_at(log: EventLog, chars: PrelimitCharacteristics, t: float,
                 left: bool = False) -> float:
    """Exact reconstruction of V(t) from the event log.

    By default returns the right limit; ``left=True`` excludes events at
    exactly t.
    """
    if t < 0 or t > log.horizon:
        raise ValueError(f"t={t} outside [0, {log.horizon}]")
    side = "left" if left else "right"
    m = log.market_times[: np.searchsorted(log.market_times, t, side=side)]
    v = chars.mu_n + chars.v0n * (1.0 + t) ** (-chars.alpha)
    if m.size:
        v += chars.zeta_m * np.sum(specfun.hawkes_phi(chars.alpha, t - m))
    starts = log.limit_times
    k = np.searchsorted(starts, t, side=side)
    if left:
        alive = np.sum(starts[:k] + log.life_lengths[:k] >= t)
    else:
        alive = np.sum(starts[:k] + log.life_lengths[:k] > t)
    return float(v + chars.zeta_l * alive)


def _event_values(log: EventLog, chars: PrelimitCharacteristics):
    times = np.sort(
        np.concatenate([log.market_times, log.limit_times,
                        log.limit_times + log.life_lengths])
    )
    times = times[times <= log.horizon]
    lefts = np.array([intensity_at(log, chars, t, left=True) for t in times])
    rights = np.array([intensity_at(log, chars, t) for t in times])
    return times, lefts, rights


def rescale_path(path: IntensityPath, n: int, alpha: float) -> IntensityPath:
    """V^(n)(t) = V_n(n t) / n**(2 alpha - 1) on the compressed time axis."""
    scale = float(n) ** (2.0 * alpha - 1.0)
    return IntensityPath(
        times=path.times / n,
        values=path.values / scale,
        event_times=path.event_times / n,
        event_left=path.event_left / scale,
        event_right=path.event_right / scale,
    )


def simulate_price(log: EventLog, seed: int, mark_law: str = "two-point",
                   delta: float = 1.0, sigma: float = 1.0,
                   initial: float = 0.0) -> PricePath:
    """Price path from i.i.d. marks at the market events of the log."""
    gen = rng.substream(seed, 1)
    k = log.market_times.size
    if mark_law == "two-point":
        marks = delta * (2.0 * (gen.random(k) < 0.5) - 1.0)
    elif mark_law == "gaussian":
        marks = sigma * gen.standard_normal(k)
    else:
        raise ValueError(f"unknown mark law {mark_law!r}")
    return PricePath(initial=initial, jump_times=log.market_times.copy(), marks=marks)


def ensemble_rescaled_stats(chars: PrelimitCharacteristics, base_grid_times,
                            n_paths: int, seed: int,
                            max_events: int = EXPLOSION_GUARD):
    """Ensemble mean/stderr of V^(n) at the given rescaled times.

    Paths are simulated in parallel with per-path counter-based streams and
    reduced in a fixed order, so the result does not depend on the worker
    count.
    """
    base_times = np.asarray(base_grid_times, dtype=float)
    sample_times = base_times * chars.n
    scale = float(chars.n) ** (2.0 * chars.alpha - 1.0)
    raw, guards = _simulate_ensemble(
        np.uint64(seed), chars.mu_n, chars.v0n, chars.zeta_m, chars.lambda_m,
        chars.zeta_l, chars.lambda_l, chars.alpha,
        float(sample_times[-1]), sample_times, n_paths, max_events,
    )
    if int(guards.sum()):
        raise ExplosionGuardError(f"{int(guards.sum())} paths exceeded {max_events} events")
    vals = raw / scale
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(n_paths)
    second = (vals ** 2).mean(axis=0)
    return mean, stderr, second
