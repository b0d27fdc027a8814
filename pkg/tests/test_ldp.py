import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import LDP_CONST_02_M08_01
from roughvol.errors import ConfigError, DegenerateVolatilityError, NumericError
from roughvol.functions import bergomi_family, constant_family, exp_family, linear_family, sqrt_family
from roughvol.kernel import c_h_constant, kernel_prefactor
from roughvol.ldp import (LdpProblem, _discretization, _objective, controlled_path, rate_curve, rate_function,
                          skew_formula, skew_generic)


def test_zero_control_gives_zero_path():
    p = controlled_path(np.zeros(8), 0.3)
    assert not np.any(p.values)
    q = controlled_path(np.zeros(8), 0.3, u=exp_family(), z=0.7)
    np.testing.assert_allclose(q.values, 0.7)


@given(st.floats(min_value=0.05, max_value=0.5), st.floats(min_value=-3, max_value=3))
def test_constant_control_closed_form(H, a):
    p = controlled_path(np.full(16, a), H)
    np.testing.assert_allclose(p.values, a * kernel_prefactor(H) * p.times ** (H + 0.5), atol=1e-12)


def test_unit_diffusion_reduces_to_simple_path():
    h = np.sin(np.linspace(0, 3, 16))
    simple = controlled_path(h, 0.3)
    picard = controlled_path(h, 0.3, u=constant_family(1.0), z=0.0)
    np.testing.assert_allclose(picard.values, simple.values, atol=1e-14)
    assert picard.iterations == 1


def test_picard_nonconvergence_reported():
    with pytest.raises(NumericError):
        controlled_path(np.full(8, 1.0), 0.3, u=linear_family(1.0, 1.0), z=0.0, max_iter=2)


def test_control_must_be_finite():
    with pytest.raises(ConfigError):
        controlled_path(np.array([0.0, np.nan]), 0.3)


def test_problem_validation():
    for kwargs in ({"n_grid": 1}, {"sub": 0}, {"rho": 1.5}):
        with pytest.raises(ConfigError):
            LdpProblem(exp_family(), **{"rho": 0.0, "H": 0.3, **kwargs})


def test_rate_at_zero():
    res = rate_function(0.0, LdpProblem(bergomi_family(0.2, 2.0), -0.7, 0.2, n_grid=16))
    assert abs(res.value) <= 1e-10
    assert np.max(np.abs(res.h)) <= 1e-6


def test_constant_volatility_example():
    res = rate_function(0.1, LdpProblem(constant_family(0.2), -0.8, 0.3, n_grid=16))
    assert res.value == pytest.approx(LDP_CONST_02_M08_01, rel=1e-3)
    assert res.converged
    a_star = -0.8 * 0.1 / (0.2 * 1.64)
    np.testing.assert_allclose(res.h, a_star, rtol=1e-4)


@pytest.mark.parametrize("n_grid", [16, 64])
def test_constant_volatility_grid(n_grid):
    for sigma in (0.1, 0.2, 0.4):
        for rho in (-0.8, 0.0, 0.5):
            for y in (-0.2, 0.05, 0.3):
                res = rate_function(y, LdpProblem(constant_family(sigma), rho, 0.3, n_grid=n_grid))
                exact = y**2 / (2 * sigma**2 * (1 + rho**2))
                assert res.value == pytest.approx(exact, rel=1e-3)


def test_discretization_independence():
    prob = lambda n: LdpProblem(bergomi_family(0.2, 1.0), -0.6, 0.3, n_grid=n)
    a = rate_function(0.15, prob(16)).value
    b = rate_function(0.15, prob(64)).value
    assert abs(a - b) <= 2e-3 * max(a, b)


@pytest.mark.parametrize("y", [-0.3, 0.1, 0.4])
def test_upper_bound_by_zero_control(y):
    prob = LdpProblem(bergomi_family(0.2, 2.0), -0.7, 0.25, n_grid=16)
    res = rate_function(y, prob)
    bound = y**2 / (2 * 0.2**2)
    assert 0 <= res.value <= bound + 1e-12


@pytest.mark.parametrize("y", [0.05, 0.2])
def test_symmetric_when_uncorrelated(y):
    prob = LdpProblem(bergomi_family(0.2, 2.0), 0.0, 0.3, n_grid=16)
    assert rate_function(y, prob).value == pytest.approx(rate_function(-y, prob).value, abs=1e-6)


def test_non_simple_unit_diffusion_reduction():
    f = bergomi_family(0.2, 1.5)
    simple = LdpProblem(f, -0.5, 0.3, n_grid=16)
    non_simple = LdpProblem(f, -0.5, 0.3, u=constant_family(1.0), z=0.0, n_grid=16)
    for y in (-0.2, 0.1, 0.3):
        assert rate_function(y, non_simple).value == pytest.approx(rate_function(y, simple).value, abs=1e-8)


@pytest.mark.parametrize("u", [None, linear_family(0.5, 1.0)])
def test_gradient_matches_finite_differences(u):
    prob = LdpProblem(bergomi_family(0.3, 1.2), -0.6, 0.3, u=u, z=0.1, n_grid=8, sub=3)
    disc = _discretization(prob.H, prob.n_grid, prob.sub)
    h = np.random.default_rng(1).normal(size=8) * 0.3
    _, grad, _ = _objective(h, 0.2, prob, disc)
    fd = np.empty(8)
    for i in range(8):
        e = np.zeros(8)
        e[i] = 1e-6
        fd[i] = (_objective(h + e, 0.2, prob, disc)[0] - _objective(h - e, 0.2, prob, disc)[0]) / 2e-6
    np.testing.assert_allclose(grad, fd, atol=1e-7, rtol=1e-6)


def test_degenerate_volatility():
    prob = LdpProblem(constant_family(1e-8), 0.3, 0.3, n_grid=8)
    with pytest.raises(DegenerateVolatilityError):
        rate_function(0.1, prob)


def test_warm_started_curve():
    prob = LdpProblem(bergomi_family(0.2, 2.0), -0.7, 0.3, n_grid=16)
    ys = [0.0, 0.1, 0.2]
    curve = rate_curve(ys, prob)
    assert [r.y for r in curve] == ys
    assert curve[1].n_starts == 4 and curve[0].n_starts == 3
    cold = rate_function(0.2, prob).value
    assert curve[2].value <= cold + 1e-9
    with pytest.raises(ConfigError):
        rate_function(0.1, prob, warm_start=np.zeros(3))


def test_sqrt_volatility_rate_is_finite():
    prob = LdpProblem(sqrt_family(1e-4), -0.5, 0.3, u=sqrt_family(1e-4, 0.3), z=0.04, n_grid=16)
    res = rate_function(0.1, prob)
    assert math.isfinite(res.value) and res.value > 0


def test_skew_examples():
    assert skew_formula(0.5, -0.7, 1.2, 0.04, 0.3) == pytest.approx(-0.7 * 1.2 / (4 * 0.2), rel=1e-14)
    assert skew_formula(0.3, 0.0, 1.2, 0.04, 0.1) == 0.0
    H, rho, eta, z, t = 0.2, -0.6, 0.4, 0.09, 0.05
    generic = skew_generic(H, rho, eta * math.sqrt(z), 1 / (2 * z), t)
    assert generic == pytest.approx(skew_formula(H, rho, eta, z, t), rel=1e-14)
    assert skew_formula(0.3, -0.5, 1.0, 0.04, 1.0) == pytest.approx(-0.5 / 0.4 * c_h_constant(0.3), rel=1e-14)
    for bad in ((0.3, -0.5, 1.0, 0.0, 0.1), (0.3, -0.5, 1.0, 0.04, 0.0)):
        with pytest.raises(ConfigError):
            skew_formula(*bad)
