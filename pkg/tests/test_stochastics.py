"""Test the GPS and wind noise models and the seeded streams."""

import inspect
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, optimize, special, stats

from aerie import stochastics as st
from aerie.errors import NumericError
from aerie.stochastics import CauchyCfg, NoiseConfig, NoiseDraw, RandomStreams, WindCfg


def _log_magnitude_pdf(y, cfg):
    """Density of ln|z| for the two-sided GPS offset."""
    z = math.exp(y)
    return 2.0 * st.cauchy_pdf(z, cfg) * z


def test_cauchy_constants():
    cfg = CauchyCfg()
    assert cfg.x_scale == pytest.approx(7.78e-6, rel=1e-2)
    assert st.cauchy_pdf(0.0, cfg) == pytest.approx(681.6, rel=1e-3)
    assert cfg.truncation_m == pytest.approx(50.0 * math.sqrt(0.22))


def test_cauchy_pdf_symmetric_and_decreasing():
    cfg = CauchyCfg()
    z = np.array([1e-4, 1e-2, 0.1, 1.0])
    np.testing.assert_allclose(st.cauchy_pdf(z, cfg), st.cauchy_pdf(-z, cfg))
    assert np.all(np.diff(st.cauchy_pdf(z, cfg)) < 0)


def test_cauchy_pdf_normalises():
    cfg = CauchyCfg()
    total, _ = integrate.quad(_log_magnitude_pdf, -40.0, 10.0, args=(cfg,), limit=400)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_cauchy_samples_finite_and_truncated():
    cfg = CauchyCfg()
    samples = st.sample_cauchy(np.random.default_rng(0), cfg, 10_000)
    assert np.all(np.isfinite(samples))
    assert np.all(np.abs(samples) <= cfg.truncation_m)
    assert 0.4 < np.mean(samples > 0) < 0.6


def test_cauchy_sampler_is_seeded():
    cfg = CauchyCfg()
    a = st.sample_cauchy(np.random.default_rng(3), cfg, 100)
    b = st.sample_cauchy(np.random.default_rng(3), cfg, 100)
    np.testing.assert_array_equal(a, b)


def test_state_noise_is_a_truncated_pair():
    cfg = CauchyCfg()
    offset = st.sample_state_noise(np.random.default_rng(8), cfg)
    assert offset.shape == (2,)
    assert np.all(np.abs(offset) <= cfg.truncation_m)
    np.testing.assert_array_equal(offset, st.sample_state_noise(np.random.default_rng(8), cfg))


def test_rejection_cap_default():
    assert st.MAX_REJECTIONS == 1_000_000
    assert inspect.signature(st.rejection_sample).parameters["max_rejections"].default == st.MAX_REJECTIONS


def test_rejection_sampler_exhaustion():
    with pytest.raises(NumericError):
        st.rejection_sample(
            np.random.default_rng(0),
            lambda y: np.full_like(y, -np.inf),
            (0.0, 1.0),
            0.0,
            size=5,
            max_rejections=1_000,
        )


@pytest.mark.slow
def test_cauchy_histogram_chi_square():
    cfg = CauchyCfg()
    samples = st.sample_cauchy(np.random.default_rng(12345), cfg, 1_000_000)
    lo, hi = st._magnitude_support(cfg)
    mass, _ = integrate.quad(_log_magnitude_pdf, lo, hi, args=(cfg,), limit=400)

    def cdf(t):
        return integrate.quad(_log_magnitude_pdf, lo, t, args=(cfg,), limit=400)[0] / mass

    bins = 40
    edges = [optimize.brentq(lambda t: cdf(t) - i / bins, lo, hi) for i in range(1, bins)]
    counts = np.bincount(np.searchsorted(edges, np.log(np.abs(samples))), minlength=bins)
    expected = np.full(bins, samples.size / bins)
    _, p_value = stats.chisquare(counts, expected)
    assert p_value > 0.01


def test_weibull_inverse_cdf():
    cfg = WindCfg()
    assert st.weibull_speed(1.0 - math.exp(-1.0), cfg) == pytest.approx(10.97, rel=1e-12)
    assert st.weibull_speed(0.0, cfg) == 0.0
    u = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(st.weibull_speed(u, cfg), stats.weibull_min.ppf(u, 2.29, scale=10.97))


def test_wind_moments():
    cfg = WindCfg()
    assert cfg.mean_speed == pytest.approx(10.97 * special.gamma(1 + 1 / 2.29))
    assert cfg.speed_variance > 0


@pytest.mark.slow
def test_weibull_sample_mean():
    cfg = WindCfg()
    speeds, _ = st.sample_wind_batch(np.random.default_rng(1), cfg, 1_000_000)
    assert speeds.mean() == pytest.approx(10.97 * special.gamma(1 + 1 / 2.29), rel=0.02)


def test_wind_direction_follows_pmf():
    pmf = [0.0] * 12
    pmf[3] = 1.0
    cfg = WindCfg(direction_pmf=pmf)
    _, sectors = st.sample_wind_batch(np.random.default_rng(0), cfg, 200)
    assert set(sectors.tolist()) == {3}
    # Sector 3 is centred on +y, so the drift points towards -y.
    velocity = st.sample_wind(np.random.default_rng(0), cfg)
    assert velocity[0] == pytest.approx(0.0, abs=1e-9)
    assert velocity[1] < 0


def test_wind_sector_frequencies():
    _, sectors = st.sample_wind_batch(np.random.default_rng(2), WindCfg(), 120_000)
    freq = np.bincount(sectors, minlength=12) / sectors.size
    np.testing.assert_allclose(freq, np.full(12, 1 / 12), atol=0.005)


@pytest.mark.parametrize(
    "pmf",
    [[1 / 11] * 11, [0.5, -0.5] + [1 / 10] * 10, [0.1] * 12],
)
def test_invalid_direction_pmf(pmf):
    with pytest.raises(ValidationError):
        WindCfg(direction_pmf=pmf)


def test_disabled_noise_draws_nothing():
    rng = np.random.default_rng(0)
    before = rng.bit_generator.state
    draw = st.draw_noise(rng, NoiseConfig())
    assert rng.bit_generator.state == before
    np.testing.assert_array_equal(draw.state_offset, [0.0, 0.0])
    np.testing.assert_array_equal(draw.wind_velocity, [0.0, 0.0])


def test_dual_noise_draw():
    draw = st.draw_noise(np.random.default_rng(4), NoiseConfig(state_noise=True, action_noise=True))
    assert draw.state_offset.shape == (2,)
    assert np.any(draw.wind_velocity != 0.0)


def test_noise_draw_rejects_non_finite():
    with pytest.raises(NumericError):
        NoiseDraw(np.array([np.inf, 0.0]), np.zeros(2))


def test_random_streams_independent_and_reproducible():
    a, b = RandomStreams(7, 3), RandomStreams(7, 3)
    assert a.agent(0).random() == b.agent(0).random()
    assert a.environment.random() != a.trainer.random()
    other = RandomStreams(8, 3)
    assert RandomStreams(7, 3).agent(1).random() != other.agent(1).random()
    with pytest.raises(IndexError):
        a.agent(3)
