import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochflux import field as fld
from stochflux.field import Grid
from stochflux.noise import (KickSpec, KickStream, check_exp_moment, gradient_variance,
                             kick_coefficients, potential_variance, sample_kick, single_mode)

GRID = Grid(16.0, 512)


def test_amplitude_normalization():
    for sigma in (0.1, 0.5, 2.0):
        a = KickSpec(sigma_target=sigma).spectral_amplitudes
        assert np.sum(a ** 2) == pytest.approx(sigma ** 2, abs=1e-12)
        assert np.all(a >= 0) and len(a) == 32


def test_zero_sigma_is_zero():
    k = sample_kick(KickSpec(sigma_target=0.0), GRID, 3)
    assert np.all(k.potential.values == 0) and np.all(k.gradient.values == 0)
    z = KickStream(KickSpec(sigma_target=0.0), GRID)(5)
    assert np.all(z.gradient.values == 0)


def test_under_resolved_grid():
    with pytest.raises(ValueError, match="resolve"):
        sample_kick(KickSpec(), Grid(16.0, 128), 0)


def test_same_key_same_sample():
    a = sample_kick(KickSpec(seed_root=9), GRID, 4)
    b = sample_kick(KickSpec(seed_root=9), GRID, 4)
    c = sample_kick(KickSpec(seed_root=9), GRID, 5)
    assert a.potential == b.potential and a.gradient == b.gradient
    assert not np.array_equal(a.potential.values, c.potential.values)


def test_stream_matches_direct():
    spec = KickSpec(seed_root=3)
    st_ = KickStream(spec, GRID)
    for s in (0, 7, 2 ** 40):
        assert np.array_equal(st_(s).gradient.values, sample_kick(spec, GRID, s).gradient.values)


@given(st.integers(0, 2 ** 63), st.integers(0, 10 ** 6))
def test_gradient_zero_mean(seed, s):
    k = sample_kick(KickSpec(seed_root=seed), GRID, s)
    assert abs(fld.mean(k.gradient)) <= 1e-13


def test_gradient_is_analytic_derivative():
    # against a fine centred difference of the same Fourier sum
    spec = KickSpec(seed_root=1)
    fine = Grid(16.0, 8192)
    k = sample_kick(spec, fine, 0)
    fd = fld.deriv(k.potential)
    assert np.max(np.abs(fd.values - k.gradient.values)) < 1e-3 * fld.sup_norm(k.gradient)


def _samples(spec, n, x_index):
    st_ = KickStream(spec, GRID)
    return np.array([st_(s).potential.values[x_index] for s in range(n)]), st_


def test_mean_and_variance_mc():
    spec = KickSpec(sigma_target=0.5, seed_root=12)
    i0 = int(np.argmin(np.abs(GRID.centers)))
    v, _ = _samples(spec, 10 ** 4, i0)
    assert abs(v.mean()) <= 4 * 0.5 / 100
    assert v.var() == pytest.approx(0.25, rel=0.05)


def test_stationarity_two_points():
    spec = KickSpec(seed_root=21)
    st_ = KickStream(spec, GRID)
    vals = np.array([st_(s).potential.values[[40, 300]] for s in range(4000)])
    var = vals.var(axis=0)
    se = var * math.sqrt(2 / (len(vals) - 1))
    assert abs(var[0] - var[1]) <= 5 * math.hypot(*se)


def test_lag_one_independence():
    v, _ = _samples(KickSpec(seed_root=5), 4000, 100)
    rho = np.corrcoef(v[:-1], v[1:])[0, 1]
    assert abs(rho) < 3 / math.sqrt(len(v))


def test_gradient_variance_values():
    assert gradient_variance(single_mode(0.7), 2 * np.pi) == pytest.approx(0.49)
    assert gradient_variance(KickSpec(sigma_target=0.0), 16.0) == 0.0
    assert potential_variance(KickSpec()) == pytest.approx(0.25)


def test_gradient_variance_mc():
    spec = KickSpec(seed_root=77)
    st_ = KickStream(spec, GRID)
    g = np.array([st_(s).gradient.values for s in range(10 ** 4)])
    # spatial averaging is exact in law; sample every cell
    assert np.mean(g ** 2) == pytest.approx(gradient_variance(spec, 16.0), rel=0.05)


def test_coefficients_standard_normal():
    xi, eta = kick_coefficients(KickSpec(n_modes=4000), 0)
    z = np.concatenate([xi, eta])
    assert abs(z.mean()) < 4 / math.sqrt(len(z)) and abs(z.std() - 1) < 0.05


def test_exp_moment_trivial_cases():
    assert check_exp_moment(KickSpec(sigma_target=0.0), GRID, 0.5, 100) == (1.0, 0.0)
    assert check_exp_moment(KickSpec(), GRID, 0.0, 100) == (1.0, 0.0)
    with pytest.raises(ValueError):
        check_exp_moment(KickSpec(), GRID, 0.5, 10)


def test_exp_moment_self_consistency():
    spec = KickSpec(sigma_target=0.5, seed_root=4)
    m1, se1 = check_exp_moment(spec, GRID, 0.5, 2000)
    m2, se2 = check_exp_moment(spec, GRID, 0.5, 20000, first_index=10 ** 6)
    assert abs(m1 - m2) <= 3 * math.hypot(se1, se2)
    assert m1 > 1.0


def test_exp_moment_overflow():
    with pytest.raises(OverflowError):
        check_exp_moment(KickSpec(sigma_target=50.0), GRID, 100.0, 100)


def test_spec_validation():
    with pytest.raises(ValueError):
        KickSpec(sigma_target=-1)
    with pytest.raises(ValueError):
        KickSpec(n_modes=2, amplitudes=(1.0,))
