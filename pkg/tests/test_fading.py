import math

import numpy as np
import pytest
from scipy import stats

from coharq.fading import (ChannelMatrixDraw, ConfigurationError, FadingProfile,
                           Substream, gain_block, matrix_block, sample_gain,
                           sample_matrix, uniform_block)

SEED = 20260826


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        FadingProfile(lambdas=(1.0, -1.0))
    with pytest.raises(ConfigurationError):
        FadingProfile(lambdas=(1.0,), tx_antennas=0)
    with pytest.raises(ConfigurationError):
        FadingProfile(lambdas=(1.0,)).check_band(1)


def test_exponential_mean_lambda_one():
    prof = FadingProfile(lambdas=(1.0,))
    g = gain_block(prof, 0, 0, SEED, 0, 1_000_000)
    assert g.mean() == pytest.approx(1.0, abs=0.01)
    assert (g >= 0).all()


def test_exponential_cdf_point():
    prof = FadingProfile(lambdas=(2.0,))
    g = gain_block(prof, 0, 0, SEED, 0, 1_000_000)
    assert (g < 0.5).mean() == pytest.approx(1 - math.exp(-1), abs=0.005)


def test_kolmogorov_smirnov():
    prof = FadingProfile(lambdas=(1.7,))
    g = gain_block(prof, 0, 3, SEED, 0, 100_000)
    _, pvalue = stats.kstest(g, "expon", args=(0, 1 / 1.7))
    assert pvalue > 0.01


def test_partition_independence():
    """Chunked generation must reproduce the monolithic draw sequence exactly."""
    prof = FadingProfile(lambdas=(1.0, 2.0))
    whole = gain_block(prof, 1, 5, SEED, 0, 1000)
    parts = np.concatenate([gain_block(prof, 1, 5, SEED, 0, 137),
                            gain_block(prof, 1, 5, SEED, 137, 600),
                            gain_block(prof, 1, 5, SEED, 737, 263)])
    assert (whole == parts).all()


def test_distinct_slots_and_bands_differ():
    prof = FadingProfile(lambdas=(1.0, 1.0))
    a = gain_block(prof, 0, 0, SEED, 0, 100)
    assert not np.array_equal(a, gain_block(prof, 0, 1, SEED, 0, 100))
    assert not np.array_equal(a, gain_block(prof, 1, 0, SEED, 0, 100))
    assert np.array_equal(a, gain_block(prof, 0, 0, SEED, 0, 100))


def test_lag_one_autocorrelation():
    prof = FadingProfile(lambdas=(1.0,))
    n_slots, n = 200, 500
    g = np.stack([gain_block(prof, 0, s, SEED, 0, n) for s in range(n_slots)])
    series = g[:, 0]
    for trial in range(3):
        series = g[:, trial]
        x, y = series[:-1] - series.mean(), series[1:] - series.mean()
        rho = (x * y).mean() / series.var()
        assert abs(rho) < 3 / math.sqrt(n_slots)


def test_scalar_matches_block():
    prof = FadingProfile(lambdas=(1.0, 0.5))
    sub = Substream(master_seed=SEED, trial=41, slot=2)
    draw = sample_gain(prof, 1, sub)
    block = gain_block(prof, 1, 2, SEED, 41, 1)
    assert draw.value == block[0]
    assert draw.band == 1 and draw.slot == 2


def test_mimo_siso_reduction():
    """With u = v = 1 the matrix magnitude-squared follows the gain law."""
    prof = FadingProfile(lambdas=(1.0,), tx_antennas=1, rx_antennas=1)
    h = matrix_block(prof, 0, 0, SEED, 0, 500_000)
    g = np.abs(h[:, 0, 0]) ** 2
    _, pvalue = stats.kstest(g, "expon")
    assert pvalue > 0.01


def test_mimo_entry_second_moments():
    prof = FadingProfile(lambdas=(1.0,), tx_antennas=2, rx_antennas=2)
    h = matrix_block(prof, 0, 0, SEED, 0, 200_000)
    fro = (np.abs(h) ** 2).sum(axis=(1, 2))
    assert fro.mean() == pytest.approx(4.0, abs=0.05)

    prof2 = FadingProfile(lambdas=(2.0,), tx_antennas=2, rx_antennas=1)
    h2 = matrix_block(prof2, 0, 0, SEED, 0, 200_000)
    assert (np.abs(h2[:, 0, 0]) ** 2).mean() == pytest.approx(0.5, abs=0.01)


def test_sample_matrix_shape():
    prof = FadingProfile(lambdas=(1.0, 1.0), tx_antennas=3, rx_antennas=2)
    draw = sample_matrix(prof, 0, Substream(SEED, trial=0))
    assert isinstance(draw, ChannelMatrixDraw)
    assert draw.matrix.shape == (2, 3)


def test_uniform_block_is_pure_function_of_key():
    u1 = uniform_block(SEED, 2, 0, 10, 5, words=3)
    u2 = uniform_block(SEED, 2, 0, 10, 5, words=3)
    assert (u1 == u2).all()
    assert u1.shape == (5, 3)
    assert ((u1 >= 0) & (u1 < 1)).all()
