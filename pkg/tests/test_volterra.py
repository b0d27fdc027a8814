import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughvol.errors import ConfigError, DivergedError
from roughvol.estimators import RenormScheme
from roughvol.functions import constant_family, exp_family, linear_family, sqrt_family
from roughvol.kernel import kernel_prefactor
from roughvol.noise import NoiseBatch, fbm_eval, sample_haar_noise
from roughvol.volterra import VolterraCoeffs, cell_moments, euler_reference, solve_volterra

ONE = constant_family(1.0)
ZERO = constant_family(0.0)


@pytest.mark.parametrize("H", [0.3, 0.4, 0.5])
@pytest.mark.parametrize("scheme", list(RenormScheme))
def test_unit_diffusion_reproduces_fbm(H, scheme):
    N = 7
    nb = sample_haar_noise(N, 4, 3)
    path = solve_volterra(nb, H, VolterraCoeffs(0.25, ONE, ZERO), scheme)
    grid = np.arange(2**N + 1) / 2**N
    np.testing.assert_allclose(path.values, 0.25 + fbm_eval(nb, H, grid), atol=1e-12, rtol=0)


@pytest.mark.parametrize("H", [0.3, 0.5])
def test_constant_drift_closed_form(H):
    N = 6
    nb = sample_haar_noise(N, 2, 0)
    path = solve_volterra(nb, H, VolterraCoeffs(-0.1, ZERO, constant_family(0.7)))
    grid = np.arange(2**N + 1) / 2**N
    expected = -0.1 + 0.7 * kernel_prefactor(H) * grid ** (H + 0.5)
    np.testing.assert_allclose(path.values, np.broadcast_to(expected, path.values.shape), atol=1e-12, rtol=0)


def test_off_grid_queries_use_kernel_moments():
    H = 0.35
    nb = sample_haar_noise(4, 2, 1)
    t = np.array([0.0, 0.03, 0.5, 0.77, 1.0])
    path = solve_volterra(nb, H, VolterraCoeffs(0.0, ONE, ZERO), out_grid=t)
    np.testing.assert_allclose(path.values, fbm_eval(nb, H, t), atol=1e-12, rtol=0)
    drift = solve_volterra(nb, H, VolterraCoeffs(0.0, ZERO, constant_family(2.0)), out_grid=t)
    np.testing.assert_allclose(drift.values[0], 2.0 * kernel_prefactor(H) * t ** (H + 0.5), atol=1e-12)
    with pytest.raises(ConfigError):
        solve_volterra(nb, H, VolterraCoeffs(0.0, ONE, ZERO), out_grid=[1.5])


@given(st.floats(min_value=0.26, max_value=0.5), st.integers(min_value=0, max_value=9))
def test_cell_moments_telescope(H, N):
    mom = cell_moments(H, N)
    assert mom[0] == 0.0
    # sum of moments of all cells before t_k equals the moment over [0, t_k]
    k = 2**N
    assert np.sum(mom[1:k + 1]) == pytest.approx(kernel_prefactor(H) * 1.0, rel=1e-12)


def test_single_sample_shapes():
    z = sample_haar_noise(3, 1, 0)[0]
    path = solve_volterra(z, 0.4, VolterraCoeffs(0.0, ONE, ZERO))
    assert path.values.shape == (9,) and path.grid_values.shape == (9,) and path.coefficients.shape == (8,)


def test_low_hurst_warns():
    nb = sample_haar_noise(3, 1, 0)
    with pytest.warns(RuntimeWarning):
        solve_volterra(nb, 0.2, VolterraCoeffs(0.0, ONE, ZERO))


def test_divergence_reports_index():
    nb = NoiseBatch(4, np.full((1, 16), 30.0))
    with pytest.raises(DivergedError) as info:
        solve_volterra(nb, 0.5, VolterraCoeffs(5.0, exp_family(), exp_family()))
    assert info.value.index >= 1


def test_determinism():
    c = VolterraCoeffs(0.04, sqrt_family(1e-4, 0.3), linear_family(-1.0, 0.04))
    a = solve_volterra(sample_haar_noise(5, 3, 9), 0.3, c).values
    b = solve_volterra(sample_haar_noise(5, 3, 9), 0.3, c).values
    assert np.array_equal(a, b)


def _gbm_error(N, M, self_interaction, seed=5):
    # dZ = 0.5 Z dW at H = 1/2: exact solution exp(0.5 W - t/8) on the same Brownian
    nb = sample_haar_noise(N, M, seed)
    path = solve_volterra(nb, 0.5, VolterraCoeffs(1.0, linear_family(0.5), ZERO),
                          self_interaction=self_interaction)
    w1 = 2.0 ** (-N / 2) * nb.coeffs.sum(axis=1)
    exact = np.exp(0.5 * w1 - 1.0 / 8.0)
    return math.sqrt(np.mean((path.values[:, -1] - exact) ** 2))


def test_half_converges_to_ito_solution():
    errs = [_gbm_error(N, 2000, True) for N in (4, 6, 8)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3


def test_plain_left_point_scheme_is_biased():
    # documented deviation: without the within-cell term the limit is shifted
    assert _gbm_error(8, 2000, False) > 10 * _gbm_error(8, 2000, True)


def test_half_distance_to_euler_decays():
    c = VolterraCoeffs(0.04, sqrt_family(1e-4, 0.3), linear_family(-1.0, 0.04))
    dists = []
    for N in (4, 6, 8):
        nb = sample_haar_noise(N, 1000, 2)
        a = solve_volterra(nb, 0.5, c).values[:, -1]
        b = euler_reference(nb, c)[:, -1]
        dists.append(math.sqrt(np.mean((a - b) ** 2)))
    assert dists[0] > dists[1] > dists[2]


def test_rough_heston_smoke():
    eta, v0 = 0.3, 0.04
    c = VolterraCoeffs(v0, sqrt_family(1e-6, eta), constant_family(0.0), sqrt_family(1e-6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        path = solve_volterra(sample_haar_noise(7, 500, 11), 0.3, c)
    assert np.all(np.isfinite(path.values))
    floored = np.maximum(path.values, 0.0)
    assert np.all(floored >= 0)
    mean_end = float(np.mean(path.values[:, -1]))
    assert abs(mean_end - v0) < 0.05
