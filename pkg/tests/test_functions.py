import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughvol.errors import ConfigError, ContractError
from roughvol.functions import (EXP_CLAMP, bergomi_family, constant_family, exp_family, linear_family,
                                min_level_M, parse_family, power_family, sqrt_family)

FAMILIES = {
    "exp": (exp_family(), (-2.0, 2.0)),
    "bergomi": (bergomi_family(0.2, 2.0), (-2.0, 2.0)),
    "const": (constant_family(0.7), (-2.0, 2.0)),
    "linear": (linear_family(1.5, -0.3), (-2.0, 2.0)),
    "poly": (power_family([1.0, -2.0, 0.5, 0.25]), (-2.0, 2.0)),
    "sqrt": (sqrt_family(floor=0.1), (0.0, 2.0)),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_derivatives_consistent_with_finite_differences(name):
    f, (lo, hi) = FAMILIES[name]
    x = np.random.default_rng(0).uniform(lo, hi, 20)
    h = 1e-5
    for m in range(min(f.max_order, 3)):
        fd = (f.eval(m, x + h) - f.eval(m, x)) / h
        np.testing.assert_allclose(fd, f.eval(m + 1, x + h / 2), rtol=1e-3, atol=1e-6)


@given(st.floats(min_value=-50, max_value=50), st.integers(min_value=0, max_value=20))
def test_exp_all_derivatives_equal(x, m):
    f = exp_family()
    assert f.eval(m, x) == f.eval(0, x)


def test_exp_clamp_counted():
    f = exp_family()
    x = np.array([0.0, EXP_CLAMP + 1, -EXP_CLAMP - 5])
    assert np.all(np.isfinite(f(x)))
    assert f.clamp_count(x) == 2


def test_bergomi_square():
    f = bergomi_family(0.2, 2.0)
    x = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(f(x) ** 2, 0.04 * np.exp(2.0 * x), rtol=1e-14)


def test_sqrt_family_shape():
    f = sqrt_family(floor=0.04)
    x = np.array([0.04, 0.09, 1.0])
    np.testing.assert_allclose(f(x), np.sqrt(x), rtol=1e-15)
    low = f(np.array([-1.0, 0.0, 0.01]))
    np.testing.assert_allclose(low, 0.85 * 0.2, rtol=1e-14)
    grid = np.linspace(0.0, 0.1, 2001)
    vals = f(grid)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.all(vals > 0)
    with pytest.raises(ContractError):
        f.eval(3, 0.5)
    with pytest.raises(ConfigError):
        sqrt_family(floor=0.0)


@pytest.mark.parametrize("m", [0, 1, 2])
def test_sqrt_blend_is_continuous_at_joins(m):
    floor = 0.1
    f = sqrt_family(floor=floor)
    for join in (floor / 2, floor):
        left, right = f.eval(m, join - 1e-12), f.eval(m, join + 1e-12)
        assert left == pytest.approx(right, abs=1e-6 * max(1.0, abs(right)))


def test_contract_error_for_missing_order():
    f = sqrt_family()
    f.require(2)
    with pytest.raises(ContractError):
        f.require(3)


@pytest.mark.parametrize("H, kappa, expected", [(0.4, 0.01, 1), (0.2, 0.01, 2), (0.1, 0.001, 5)])
def test_min_level_examples(H, kappa, expected):
    assert min_level_M(H, kappa) == expected


@given(st.floats(min_value=0.01, max_value=0.5), st.floats(min_value=0.001, max_value=0.99))
def test_min_level_defining_property(H, frac):
    kappa = H * frac
    if H - kappa < 1e-6:
        return
    M = min_level_M(H, kappa)
    assert (M + 1) * (H - kappa) - 0.5 - kappa > 0
    assert M * (H - kappa) - 0.5 - kappa <= 0


def test_min_level_domain():
    with pytest.raises(ConfigError):
        min_level_M(0.3, 0.3)
    with pytest.raises(ConfigError):
        min_level_M(0.3, 0.0)


@pytest.mark.parametrize("desc, x, value", [
    ("exp", 0.5, math.exp(0.5)),
    ("bergomi:sigma0=0.2,eta=2", 0.5, 0.2 * math.exp(0.5)),
    ("const:c=0.3", 4.0, 0.3),
    ("linear:a=2,b=1", 0.5, 2.0),
    ("sqrt:floor=1e-4", 0.25, 0.5),
    ("sqrt:floor=1e-4,scale=0.3", 0.25, 0.15),
])
def test_parse_family(desc, x, value):
    f = parse_family(desc)
    assert f(x) == pytest.approx(value, rel=1e-14)
    assert parse_family(f.descriptor)(x) == pytest.approx(value, rel=1e-14)


@pytest.mark.parametrize("desc", ["cosh", "const:c", "const:c=abc", "exp:k=1", "linear:b=1"])
def test_parse_family_errors(desc):
    with pytest.raises(ConfigError):
        parse_family(desc)
