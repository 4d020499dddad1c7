import numpy as np
import pytest
from scipy import stats

from spikevol import hawkes, volterra
from spikevol.grids import UniformGrid
from spikevol.sve import LimitParams

LIMIT = LimitParams(alpha=0.75, a=0.5, b=1.0, V0=1.0,
                    zeta_m_star=0.5, lambda_m_star=1.0,
                    zeta_l_star=0.5, lambda_l_star=1.0)


def _poisson_chars(rate: float) -> hawkes.PrelimitCharacteristics:
    # no excitation, no spikes, no initial impact: plain Poisson(rate)
    return hawkes.PrelimitCharacteristics(
        mu_n=rate, v0n=0.0, zeta_m=0.0, lambda_m=1.0,
        zeta_l=0.0, lambda_l=0.0, alpha=0.75, n=1)


def test_characteristics_from_limit_scalings():
    n = 50
    chars = hawkes.characteristics_from_limit(LIMIT, n)
    al = LIMIT.alpha
    assert chars.mu_n == pytest.approx(LIMIT.a * n ** (al - 1.0))
    assert chars.v0n == pytest.approx(LIMIT.V0 * n ** (2.0 * al - 1.0))
    assert chars.zeta_l == pytest.approx(LIMIT.zeta_l_star * n ** (al - 1.0))
    assert chars.lambda_l == pytest.approx(LIMIT.lambda_l_star * n ** (1.0 - al))
    assert chars.beta_n == pytest.approx(1.0 - LIMIT.b * n ** (-al))


def test_characteristics_rejects_too_small_n():
    strong = LimitParams(alpha=0.75, a=0.5, b=1.0, V0=1.0,
                         zeta_m_star=0.02, lambda_m_star=1.0,
                         zeta_l_star=0.98, lambda_l_star=1.0)
    with pytest.raises(ValueError):
        hawkes.characteristics_from_limit(strong, 1)


def test_poisson_special_case_count_distribution():
    rate, T = 3.0, 2.0
    counts = []
    for seed in range(400):
        log, _ = hawkes.simulate_hawkes(_poisson_chars(rate), T, seed)
        counts.append(len(log.market_times))
    counts = np.asarray(counts)
    mean = rate * T
    assert counts.mean() == pytest.approx(mean, abs=4.0 * np.sqrt(mean / 400))
    # chi-square against the Poisson pmf over a binned support
    edges = [0, 3, 5, 7, 9, 12, np.inf]
    obs = np.histogram(counts, bins=edges)[0]
    cdf = stats.poisson(mean).cdf
    probs = np.diff([0] + [cdf(e - 1) if np.isfinite(e) else 1.0 for e in edges[1:]])
    chi2 = stats.chisquare(obs, 400 * probs, sum_check=False)
    assert chi2.pvalue > 1e-3


def test_intensity_at_reconstructs_sampled_path():
    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    log, path = hawkes.simulate_hawkes(chars, 5.0, seed=3)
    for t, v in zip(path.times[1:], path.values[1:]):
        assert hawkes.intensity_at(log, chars, float(t)) == pytest.approx(v, rel=1e-12)


def test_intensity_jump_sizes_at_events():
    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    log, path = hawkes.simulate_hawkes(chars, 5.0, seed=11)
    for t in log.market_times[:20]:
        left = hawkes.intensity_at(log, chars, float(t), left=True)
        right = hawkes.intensity_at(log, chars, float(t))
        assert right - left == pytest.approx(chars.zeta_m * chars.alpha, rel=1e-12)


def test_simulation_deterministic_in_seed():
    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    log1, p1 = hawkes.simulate_hawkes(chars, 3.0, seed=21)
    log2, p2 = hawkes.simulate_hawkes(chars, 3.0, seed=21)
    assert np.array_equal(log1.market_times, log2.market_times)
    assert np.array_equal(p1.values, p2.values)
    log3, _ = hawkes.simulate_hawkes(chars, 3.0, seed=22)
    assert not np.array_equal(log1.market_times, log3.market_times)


def test_mean_identity_small_ensemble():
    n = 20
    chars = hawkes.characteristics_from_limit(LIMIT, n)
    grid = UniformGrid(1.0, 64)
    checkpoints = grid.nodes[::8][1:]
    mean, se, _ = hawkes.ensemble_rescaled_stats(chars, checkpoints, 2000, seed=5)
    mean_n, _ = volterra.prelimit_mean(chars, grid, fine_steps_per_unit=80)
    analytic = mean_n(checkpoints)
    z = np.abs(mean - analytic) / np.maximum(se, 1e-300)
    assert np.max(z) < 4.0


def test_ensemble_worker_count_invariance():
    import numba

    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    times = np.linspace(0.1, 1.0, 5)
    a = hawkes.ensemble_rescaled_stats(chars, times, 300, seed=9)
    old = numba.get_num_threads()
    try:
        numba.set_num_threads(max(1, old - 1) if old > 1 else 1)
        b = hawkes.ensemble_rescaled_stats(chars, times, 300, seed=9)
    finally:
        numba.set_num_threads(old)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_price_path_two_point_marks():
    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    log, _ = hawkes.simulate_hawkes(chars, 5.0, seed=13)
    price = hawkes.simulate_price(log, seed=13, mark_law="two-point", delta=0.5)
    assert np.all(np.isin(price.marks, [-0.5, 0.5]))
    t_end = float(log.horizon)
    assert price.at(t_end) == pytest.approx(price.initial + price.marks.sum())
    with pytest.raises(ValueError):
        hawkes.simulate_price(log, seed=1, mark_law="cauchy")


def test_rescale_path_scaling():
    chars = hawkes.characteristics_from_limit(LIMIT, 10)
    _, path = hawkes.simulate_hawkes(chars, 10.0, seed=2)
    res = hawkes.rescale_path(path, 10, LIMIT.alpha)
    scale = 10.0 ** (2.0 * LIMIT.alpha - 1.0)
    np.testing.assert_allclose(res.values * scale, path.values, rtol=1e-12)
    np.testing.assert_allclose(res.times * 10.0, path.times, rtol=1e-12)
