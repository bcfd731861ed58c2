import numpy as np
import pytest
from scipy.stats import kstest

from fidbo.errors import InvalidStartError
from fidbo.gp import Observation, fit_gp
from fidbo.hyper import (
    HyperPrior,
    MarginalPosterior,
    fit_hyper_posterior,
    marginal_posterior,
    slice_sample,
)
from fidbo.kernels import VALUE


def test_standard_normal_moments():
    draws = slice_sample(
        lambda t: -0.5 * float(t[0] ** 2),
        [0.0],
        10000,
        burn_in=500,
        thin=1,
        rng=42,
    )
    assert abs(draws.mean()) < 0.05
    assert abs(draws.var() - 1.0) < 0.1


def test_uniform_target_ks():
    def logdensity(t):
        return 0.0 if 0.0 <= t[0] <= 1.0 else -np.inf

    draws = slice_sample(logdensity, [0.5], 10000, burn_in=100, thin=1, rng=1)
    stat, _ = kstest(draws[:, 0], "uniform")
    assert stat < 0.02


def test_sharp_target_stays_near_start():
    # A near-delta target: every accepted point lies within the slice width.
    def logdensity(t):
        return -0.5 * float((t[0] - 3.0) ** 2) / 1e-12

    draws = slice_sample(
        logdensity, [3.0], 1, burn_in=0, thin=1, step_width=0.5, rng=0
    )
    assert abs(draws[0, 0] - 3.0) < 0.5


def test_invalid_start_raises():
    with pytest.raises(InvalidStartError):
        slice_sample(lambda t: np.nan, [0.0], 1)
    with pytest.raises(InvalidStartError):
        slice_sample(lambda t: -np.inf, [0.0], 1)


def test_step_out_cap_recorded():
    stats = {}
    # Very wide target relative to the step width forces capped brackets.
    slice_sample(
        lambda t: -0.5 * float(t[0] ** 2) / 1e6,
        [0.0],
        50,
        burn_in=0,
        thin=1,
        step_width=0.01,
        max_step_out=2,
        rng=3,
        stats=stats,
    )
    assert stats["stepout_capped"] > 0


def test_seed_reproducibility():
    args = (lambda t: -0.5 * float(t @ t), [0.1, -0.2], 25)
    a = slice_sample(*args, burn_in=10, thin=2, rng=7)
    b = slice_sample(*args, burn_in=10, thin=2, rng=7)
    np.testing.assert_array_equal(a, b)


def _toy_observations(rng, n=8):
    X = rng.uniform(-1, 1, size=(n, 1))
    y = np.sin(2 * X[:, 0]) + 0.05 * rng.normal(size=n)
    return [Observation(x, VALUE, yi) for x, yi in zip(X, y)], X, y


def test_fit_hyper_posterior_positive_and_reproducible():
    rng = np.random.default_rng(0)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    a = fit_hyper_posterior(obs, prior, k=3, burn_in=20, thin=2, seed=9)
    b = fit_hyper_posterior(obs, prior, k=3, burn_in=20, thin=2, seed=9)
    for s1, s2 in zip(a.specs, b.specs):
        assert s1.amplitude == s2.amplitude
        assert np.all(s1.lengthscales == s2.lengthscales)
        assert s1.amplitude > 0 and np.all(s1.lengthscales > 0)
    assert a.k == 3


def test_warm_start_changes_init_not_validity():
    rng = np.random.default_rng(1)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    first = fit_hyper_posterior(obs, prior, k=2, burn_in=10, thin=1, seed=2)
    second = fit_hyper_posterior(
        obs, prior, k=2, burn_in=5, thin=1, seed=3, warm_start=first.chain_end
    )
    assert all(s.amplitude > 0 for s in second.specs)


def test_marginal_posterior_k1_identity():
    rng = np.random.default_rng(2)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    hps = fit_hyper_posterior(obs, prior, k=1, burn_in=10, thin=1, seed=4)
    xq = np.array([[0.3]])
    means, variances, w = marginal_posterior(hps, xq)
    m_direct, v_direct = hps.gps[0].posterior(xq)
    assert means[0, 0] == m_direct[0] and variances[0, 0] == v_direct[0]
    assert w[0] == 1.0


def test_identical_draws_collapse_mixture():
    rng = np.random.default_rng(3)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    hps = fit_hyper_posterior(obs, prior, k=1, burn_in=10, thin=1, seed=5)
    hps.specs.append(hps.specs[0])
    hps.gps.append(hps.gps[0])
    mp = MarginalPosterior(hps)
    xq = np.array([[0.1], [0.6]])
    mean, var = mp.moments(xq)
    m1, v1 = hps.gps[0].posterior(xq)
    np.testing.assert_allclose(mean, m1, atol=1e-12)
    np.testing.assert_allclose(var, v1, atol=1e-12)


def test_mixture_mean_identity():
    rng = np.random.default_rng(4)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    hps = fit_hyper_posterior(obs, prior, k=2, burn_in=15, thin=3, seed=6)
    xq = np.array([[0.25]])
    means, variances, w = marginal_posterior(hps, xq)
    mean, var = MarginalPosterior(hps).moments(xq)
    assert mean[0] == pytest.approx(means[:, 0].mean(), rel=1e-12)
    # Law of total variance.
    expected = variances[:, 0].mean() + means[:, 0].var()
    assert var[0] == pytest.approx(expected, rel=1e-10)


def test_mixture_grad_is_average():
    rng = np.random.default_rng(5)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.05)
    hps = fit_hyper_posterior(obs, prior, k=2, burn_in=15, thin=3, seed=8)
    mp = MarginalPosterior(hps)
    x0 = np.array([0.15])
    m, g = mp.mean_and_grad(x0)
    parts = [gp.mean_and_grad(x0) for gp in hps.gps]
    assert m == pytest.approx(np.mean([p[0] for p in parts]), rel=1e-12)
    assert g[0] == pytest.approx(np.mean([p[1][0] for p in parts]), rel=1e-12)


def test_expected_improvement_nonnegative_and_zero_when_certain():
    rng = np.random.default_rng(6)
    obs, X, y = _toy_observations(rng)
    prior = HyperPrior.from_data(X, y, noise_sd=0.0)
    hps = fit_hyper_posterior(obs, prior, k=2, burn_in=15, thin=3, seed=10)
    mp = MarginalPosterior(hps)
    xq = np.linspace(-1, 1, 20)[:, None]
    ei = mp.expected_improvement(xq, best=float(y.min()))
    assert np.all(ei >= 0.0)
    # Far below every plausible value the improvement is essentially zero.
    ei_far = mp.expected_improvement(xq, best=float(y.min()) - 50.0)
    assert np.all(ei_far < 1e-10)


def test_prior_from_data_shapes():
    X = np.array([[0.0, 0.0], [1.0, 2.0]])
    y = np.array([0.0, 1.0])
    p = HyperPrior.from_data(X, y, noise_sd=0.1)
    assert p.log_mean.shape == (3,)
    p2 = HyperPrior.from_data(X, y)
    assert p2.log_mean.shape == (4,)
    spec = p2.to_spec(p2.log_mean)
    assert spec.noise_sd > 0
