"""Renormalized integral estimators on the Haar construction.

For a level-N sample with coefficients ``Z_l``::

    I_tilde = sum_l int_cell_l [2^(N/2) Z_l f(W_hat(r), r) - C(r) df(W_hat(r), r)] dr
    V       = int_0^t f(W_hat(r), r)^2 dr

where ``C`` is the diagonal renormalization function or its cell mean.
Cell integrals use a closed trapezoid with ``d`` nodes per cell (both
endpoints included); no composite rule straddles a cell boundary.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .functions import SmoothFunctionFamily
from .kernel import cell_index, check_hurst, kernel_prefactor, renorm_constant
from .noise import basis_values, fbm_on_cells

DESK_DELTA = 2.0**-12
FULL_SCALE_DELTA = 2.0**-17


class RenormScheme(str, enum.Enum):
    NONCONSTANT = "nonconstant"
    CONSTANT = "constant"


@dataclass(frozen=True)
class QuadratureConfig:
    """Either a fixed number ``d`` of nodes per Haar cell, or a step ``delta``.

    With ``delta`` the node count depends on the level: ``d = 2^-N / delta + 1``
    (at least 2).
    """

    d: int | None = None
    delta: float | None = None

    def __post_init__(self):
        if (self.d is None) == (self.delta is None):
            raise ConfigError("give exactly one of d or delta")
        if self.d is not None and self.d < 2:
            raise ConfigError("need at least 2 quadrature points per cell")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("delta must be positive")

    def points(self, N: int) -> int:
        if self.d is not None:
            return self.d
        return max(2, int(round(2.0**-N / self.delta)) + 1)


DEFAULT_QUADRATURE = QuadratureConfig(delta=DESK_DELTA)


@dataclass
class EstimatorOutput:
    i_tilde: np.ndarray
    v_hat: np.ndarray
    j_tilde: np.ndarray | None = None
    clamped: int = 0


def _as_coeffs(noise):
    coeffs = np.asarray(noise.coeffs, dtype=float)
    single = coeffs.ndim == 1
    return np.atleast_2d(coeffs), noise.level, single


def _unwrap(values, single):
    return float(values[0]) if single else values


def _trapezoid_weights(d: int, width: float) -> np.ndarray:
    w = np.full(d, width / (d - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _cell_sum(per_cell: np.ndarray) -> np.ndarray:
    # extended-precision accumulation over cells
    return per_cell.astype(np.longdouble).sum(axis=1).astype(float)


@dataclass(frozen=True)
class _Cells:
    """Quadrature layout: full cells plus an optional partial last cell."""

    N: int
    d: int
    n_full: int
    remainder: float

    @classmethod
    def build(cls, N, d, t_end):
        if not (0.0 < t_end <= 1.0):
            raise ConfigError(f"t_end must lie in (0, 1], got {t_end}")
        eps = 2.0**-N
        n_full = min(int(cell_index(t_end, N)), 2**N)
        remainder = t_end - n_full * eps
        if remainder <= 8 * np.spacing(1.0):
            remainder = 0.0
        return cls(N, d, n_full, remainder)

    @property
    def eps(self):
        return 2.0**-self.N

    def full_nodes(self):
        sigma = np.linspace(0.0, 1.0, self.d)
        return (np.arange(self.n_full)[:, None] + sigma[None, :]) * self.eps

    def partial_nodes(self):
        return self.n_full * self.eps + np.linspace(0.0, self.remainder, self.d)


def _renorm_values(H, N, offsets, scheme):
    scheme = RenormScheme(scheme)
    if scheme is RenormScheme.CONSTANT:
        return np.full(np.shape(offsets), renorm_constant(H, N))
    return kernel_prefactor(H) * 2.0**N * np.asarray(offsets) ** (H + 0.5)


def _pieces(coeffs, N, H, cells: _Cells):
    """Yield ``(cell_indices, nodes, W_hat, weights, offsets)`` for full and partial cells."""
    d = cells.d
    if cells.n_full:
        w_hat = fbm_on_cells(coeffs, H, d)[:, : cells.n_full, :]
        offsets = np.linspace(0.0, 1.0, d) * cells.eps
        yield np.arange(cells.n_full), cells.full_nodes(), w_hat, _trapezoid_weights(d, cells.eps), offsets
    if cells.remainder > 0:
        nodes = cells.partial_nodes()
        w_hat = (coeffs @ basis_values(H, N, nodes).T)[:, None, :]
        offsets = nodes - cells.n_full * cells.eps
        yield np.array([cells.n_full]), nodes[None, :], w_hat, _trapezoid_weights(d, cells.remainder), offsets


def estimate(noise, H: float, f: SmoothFunctionFamily, scheme=RenormScheme.NONCONSTANT,
             q: QuadratureConfig = DEFAULT_QUADRATURE, t_end: float = 1.0, M_level: int | None = None):
    """Compute ``I_tilde``, ``V`` (and ``J_tilde`` when ``M_level`` is given) in one pass."""
    H = check_hurst(H)
    f.require(1 if M_level is None else max(1, M_level))
    coeffs, N, _ = _as_coeffs(noise)
    cells = _Cells.build(N, q.points(N), t_end)
    scale = 2.0 ** (N / 2)
    i_parts, v_parts, j_parts = [], [], []
    clamped = 0
    for idx, nodes, w_hat, weights, offsets in _pieces(coeffs, N, H, cells):
        z = coeffs[:, idx] * scale
        renorm = _renorm_values(H, N, offsets, scheme)
        f0 = f.eval(0, w_hat, nodes)
        f1 = f.eval(1, w_hat, nodes)
        clamped += f.clamp_count(w_hat)
        i_parts.append(z * (f0 @ weights) - f1 @ (weights * renorm))
        v_parts.append((f0 * f0) @ weights)
        if M_level is not None:
            j_parts.append(_jtilde_cells(f, M_level, z, w_hat, nodes, weights, renorm))
    out = EstimatorOutput(
        _cell_sum(np.concatenate(i_parts, axis=1)),
        _cell_sum(np.concatenate(v_parts, axis=1)),
        None if M_level is None else _cell_sum(np.concatenate(j_parts, axis=1)),
        clamped,
    )
    return out


def _jtilde_cells(f, M_level, z, w_hat, nodes, weights, renorm):
    base = w_hat[:, :, :1]
    incr = w_hat - base
    t_left = nodes[:, :1]
    total = np.zeros(w_hat.shape[:2])
    power = np.ones_like(w_hat)  # incr^m
    prev = power
    for m in range(M_level + 1):
        deriv = f.eval(m, base[:, :, 0], t_left[:, 0])
        total += deriv / math.factorial(m) * z * (power @ weights)
        if m >= 1:
            # power currently holds incr^m; the renormalization needs incr^(m-1)
            total -= deriv / math.factorial(m - 1) * (prev @ (weights * renorm))
        prev = power
        power = power * incr
    return total


def itilde(noise, H, f, scheme=RenormScheme.NONCONSTANT, q=DEFAULT_QUADRATURE, t_end=1.0):
    _, _, single = _as_coeffs(noise)
    return _unwrap(estimate(noise, H, f, scheme, q, t_end).i_tilde, single)


def vhat(noise, H, f, q=DEFAULT_QUADRATURE, t_end=1.0):
    _, _, single = _as_coeffs(noise)
    return _unwrap(estimate(noise, H, f, RenormScheme.NONCONSTANT, q, t_end).v_hat, single)


def jtilde(noise, H, f, M_level, q=DEFAULT_QUADRATURE, t_end=1.0, scheme=RenormScheme.NONCONSTANT):
    """Local-expansion estimator: derivatives of ``f`` frozen at each cell's left end."""
    if M_level < 0:
        raise ConfigError("expansion order must be nonnegative")
    f.require(M_level)
    _, _, single = _as_coeffs(noise)
    out = estimate(noise, H, _with_order(f, M_level), scheme, q, t_end, M_level=M_level)
    return _unwrap(out.j_tilde, single)


def _with_order(f, M_level):
    # estimate() also evaluates f' for I_tilde; M_level = 0 must not demand more
    if f.max_order >= 1:
        return f
    return SmoothFunctionFamily(f.name, lambda m, x, t: f.deriv(m, x, t) if m == 0 else np.zeros(np.shape(x)),
                                1, f.params)


def ito_reference_sum(noise, H, f, t_end=1.0):
    """Left-point sum ``sum_l f(W_hat(t_l), t_l) (W(t_(l+1)) - W(t_l))`` over Haar cells."""
    H = check_hurst(H)
    coeffs, N, single = _as_coeffs(noise)
    cells = _Cells.build(N, 2, t_end)
    eps = cells.eps
    lefts = np.arange(cells.n_full + (cells.remainder > 0)) * eps
    increments = np.full(lefts.size, eps)
    if cells.remainder > 0:
        increments[-1] = cells.remainder
    w_left = coeffs @ basis_values(H, N, lefts).T
    dW = coeffs[:, : lefts.size] * 2.0 ** (N / 2) * increments
    return _unwrap(_cell_sum(f.eval(0, w_left, lefts) * dW), single)


__all__ = [
    "RenormScheme", "QuadratureConfig", "EstimatorOutput", "estimate",
    "itilde", "jtilde", "vhat", "ito_reference_sum",
]
