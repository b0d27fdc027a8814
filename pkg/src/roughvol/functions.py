"""Volatility maps f(x, t) with their spatial derivatives."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractError

EXP_CLAMP = 700.0
UNBOUNDED_ORDER = 64


@dataclass(frozen=True)
class SmoothFunctionFamily:
    """A map ``f(x, t)`` together with ``d^m f / dx^m`` for ``m <= max_order``.

    ``deriv(m, x, t)`` must broadcast over arrays. ``exponent`` (optional)
    maps ``x`` to the argument passed to ``exp``; it is only used to count
    clamped evaluations.
    """

    name: str
    deriv: Callable
    max_order: int
    params: tuple = ()
    exponent: Callable | None = field(default=None, compare=False)

    def eval(self, m: int, x, t=0.0):
        if m < 0 or m > self.max_order:
            raise ContractError(f"{self.descriptor} provides derivatives up to order {self.max_order}, asked for {m}")
        return self.deriv(m, np.asarray(x, dtype=float), t)

    def __call__(self, x, t=0.0):
        return self.eval(0, x, t)

    def require(self, order: int):
        if order > self.max_order:
            raise ContractError(f"{self.descriptor} provides derivatives up to order {self.max_order}, need {order}")

    def clamp_count(self, x) -> int:
        if self.exponent is None:
            return 0
        return int(np.count_nonzero(np.abs(self.exponent(np.asarray(x))) > EXP_CLAMP))

    @property
    def descriptor(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v!r}" for k, v in self.params)


def _clamped_exp(y):
    return np.exp(np.clip(y, -EXP_CLAMP, EXP_CLAMP))


def exp_family() -> SmoothFunctionFamily:
    return SmoothFunctionFamily("exp", lambda m, x, t: _clamped_exp(x), UNBOUNDED_ORDER, exponent=lambda x: x)


def bergomi_family(sigma0: float, eta: float) -> SmoothFunctionFamily:
    """``f(x) = sigma0 exp(eta x / 2)``, i.e. ``f^2 = sigma0^2 exp(eta x)``."""
    k = eta / 2.0
    return SmoothFunctionFamily(
        "bergomi",
        lambda m, x, t: sigma0 * k**m * _clamped_exp(k * x),
        UNBOUNDED_ORDER,
        (("sigma0", float(sigma0)), ("eta", float(eta))),
        exponent=lambda x: k * x,
    )


def constant_family(c: float) -> SmoothFunctionFamily:
    def deriv(m, x, t):
        return np.full(np.shape(x), float(c) if m == 0 else 0.0)

    return SmoothFunctionFamily("const", deriv, UNBOUNDED_ORDER, (("c", float(c)),))


def linear_family(a: float, b: float = 0.0) -> SmoothFunctionFamily:
    def deriv(m, x, t):
        if m == 0:
            return a * x + b
        return np.full(np.shape(x), float(a) if m == 1 else 0.0)

    return SmoothFunctionFamily("linear", deriv, UNBOUNDED_ORDER, (("a", float(a)), ("b", float(b))))


def power_family(coeffs) -> SmoothFunctionFamily:
    """Polynomial ``sum_k coeffs[k] x^k``; used as an exactness oracle for local expansions."""
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))

    def deriv(m, x, t):
        return poly.deriv(m)(x) if m else poly(x)

    return SmoothFunctionFamily("poly", deriv, UNBOUNDED_ORDER, (("coeffs", tuple(map(float, coeffs))),))


def _sqrt_blend(floor: float):
    # quintic on [floor/2, floor] matching sqrt to second order at floor and a
    # flat value 0.85 sqrt(floor) at floor/2; coefficients in s = 2x/floor - 1
    rows = []
    for s0 in (0.0, 1.0):
        for k in range(3):
            rows.append([0.0 if n < k else math.perm(n, k) * s0 ** (n - k) for n in range(6)])
    rhs = [0.85, 0.0, 0.0, 1.0, 0.25, -0.0625]
    return np.polynomial.Polynomial(np.linalg.solve(np.array(rows), rhs))


def sqrt_family(floor: float = 1e-6, scale: float = 1.0) -> SmoothFunctionFamily:
    """``scale * sqrt(x)`` for ``x >= floor``, C^2-blended to a constant below ``floor/2``."""
    if floor <= 0:
        raise ConfigError("sqrt floor must be positive")
    blend = _sqrt_blend(floor)
    root = math.sqrt(floor)

    def deriv(m, x, t):
        x = np.asarray(x, dtype=float)
        xs = np.maximum(x, floor)
        # d^m sqrt(x) = prod_{i<m} (1/2 - i) x^(1/2 - m)
        coef = math.prod(0.5 - i for i in range(m))
        upper = coef * xs ** (0.5 - m)
        s = np.clip(2.0 * x / floor - 1.0, 0.0, 1.0)
        mid = root * blend.deriv(m)(s) * (2.0 / floor) ** m if m else root * blend(s)
        lower = 0.85 * root if m == 0 else 0.0
        out = np.where(x >= floor, upper, np.where(x <= floor / 2, lower, mid))
        return scale * out

    params = (("floor", float(floor)),) if scale == 1.0 else (("floor", float(floor)), ("scale", float(scale)))
    return SmoothFunctionFamily("sqrt", deriv, 2, params)


def min_level_M(H: float, kappa: float) -> int:
    """Smallest expansion order with ``(M+1)(H - kappa) - 1/2 - kappa > 0``."""
    if not (0.0 < kappa < H):
        raise ConfigError(f"need 0 < kappa < H, got kappa={kappa}, H={H}")
    M = math.floor((0.5 + kappa) / (H - kappa))
    while (M + 1) * (H - kappa) - 0.5 - kappa <= 0:
        M += 1
    while M > 0 and M * (H - kappa) - 0.5 - kappa > 0:
        M -= 1
    return M


def parse_family(desc: str) -> SmoothFunctionFamily:
    """Build a family from a CLI descriptor such as ``bergomi:sigma0=0.2,eta=2``."""
    name, _, rest = desc.strip().partition(":")
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"malformed parameter {item!r} in function descriptor {desc!r}")
            try:
                kwargs[key.strip()] = float(value)
            except ValueError:
                raise ConfigError(f"non-numeric parameter {item!r} in {desc!r}") from None
    builders = {
        "exp": (exp_family, ()),
        "bergomi": (bergomi_family, ("sigma0", "eta")),
        "const": (constant_family, ("c",)),
        "linear": (linear_family, ("a", "b")),
        "sqrt": (sqrt_family, ("floor", "scale")),
    }
    if name not in builders:
        raise ConfigError(f"unknown function family {name!r}; choose from {sorted(builders)}")
    build, allowed = builders[name]
    unknown = set(kwargs) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)} for family {name!r}")
    try:
        return build(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from None
