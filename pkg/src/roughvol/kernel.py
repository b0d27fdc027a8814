"""Riemann-Liouville Volterra kernel and its Haar-mollified counterpart.

With ``eps = 2**-N`` and ``a = H + 1/2``::

    K(s, t)        = sqrt(2H) (t - s)^(H - 1/2) 1{t > s}
    K_eps(u, v)    = sqrt(2H)/a 2^N (|u - l eps|^a - |u - min((l+1) eps, u)|^a) 1{l eps <= u},
                     l = floor(v 2^N)
    C_eps(t)       = K_eps(t, t) = sqrt(2H)/a 2^N (t - floor(t 2^N) eps)^a
    mean of C_eps  = c_H 2^(N (1/2 - H)),   c_H = sqrt(2H) / ((H + 1/2)(H + 3/2))

All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import CapacityError, ConfigError

N_MAX = 20


def check_hurst(H: float) -> float:
    H = float(H)
    if not (0.0 < H <= 0.5):
        raise ConfigError(f"Hurst parameter must satisfy 0 < H <= 1/2, got {H}")
    return H


def check_level(N: int, n_max: int = N_MAX) -> int:
    if isinstance(N, bool) or int(N) != N or N < 0:
        raise ConfigError(f"Haar level must be a nonnegative integer, got {N!r}")
    N = int(N)
    if N > n_max:
        raise CapacityError(f"Haar level N={N} exceeds the cap N_max={n_max}")
    return N


def kernel_prefactor(H: float) -> float:
    """``sqrt(2H)/(H + 1/2)``: the constant in front of every kernel moment."""
    return math.sqrt(2.0 * H) / (H + 0.5)


def dyadic_floor(k: int, n_prime: int, N: int) -> int:
    """``floor((k / 2**n_prime) * 2**N)`` in exact integer arithmetic."""
    if N >= n_prime:
        return k << (N - n_prime)
    return k >> (n_prime - N)


def cell_index(t, N: int):
    """Index of the level-N Haar cell containing ``t``.

    Floating inputs get a half-ulp guard so that a time lying within rounding
    of a grid point is mapped to the cell starting there. A ``(k, n_prime)``
    tuple is treated as the dyadic ``k 2^-n_prime`` and floored exactly.
    """
    if isinstance(t, tuple):
        return dyadic_floor(int(t[0]), int(t[1]), N)
    x = np.asarray(t, dtype=float) * float(2**N)
    idx = np.floor(x + 0.5 * np.spacing(np.abs(x)))
    if idx.ndim == 0:
        return int(idx)
    return idx.astype(np.int64)


def volterra_kernel(H: float, s, t):
    H = check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    pos = t > s
    # the power is only taken where t > s; 0^(negative) never happens
    lag = np.where(pos, t - s, 1.0)
    out = np.where(pos, math.sqrt(2.0 * H) * lag ** (H - 0.5), 0.0)
    return out[()] if out.ndim == 0 else out


def kernel_moment(H: float, t, lo, hi):
    """Exact ``int_lo^hi K(s, t) ds`` for ``lo <= hi``; the part beyond ``t`` vanishes."""
    a = H + 0.5
    t = np.asarray(t, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = kernel_prefactor(H) * (np.maximum(t - lo, 0.0) ** a - np.maximum(t - hi, 0.0) ** a)
    return out[()] if out.ndim == 0 else out


def mollified_kernel_haar(H: float, N: int, u, v):
    H = check_hurst(H)
    N = check_level(N)
    eps = 2.0**-N
    a = H + 0.5
    u = np.asarray(u, dtype=float)
    left = np.asarray(cell_index(v, N), dtype=float) * eps
    right = np.minimum(left + eps, u)
    active = left <= u
    body = np.abs(u - left) ** a - np.abs(u - right) ** a
    out = np.where(active, kernel_prefactor(H) * 2.0**N * body, 0.0)
    return out[()] if out.ndim == 0 else out


def renorm_nonconstant(H: float, N: int, t):
    H = check_hurst(H)
    N = check_level(N)
    t = np.asarray(t, dtype=float)
    frac = t - np.asarray(cell_index(t, N), dtype=float) * 2.0**-N
    out = kernel_prefactor(H) * 2.0**N * np.abs(frac) ** (H + 0.5)
    return out[()] if out.ndim == 0 else out


def c_h_constant(H: float) -> float:
    H = check_hurst(H)
    return math.sqrt(2.0 * H) / ((H + 0.5) * (H + 1.5))


def renorm_constant(H: float, N: int) -> float:
    N = check_level(N)
    return c_h_constant(H) * 2.0 ** (N * (0.5 - H))


def renorm_cell_mean(H: float, N: int, lo, hi):
    """Exact mean of the non-constant renormalization over ``[lo, hi]``.

    ``lo`` and ``hi`` are offsets from the left edge of a Haar cell,
    ``0 <= lo < hi <= 2**-N``.
    """
    a = H + 0.5
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = kernel_prefactor(H) * 2.0**N * (hi ** (a + 1.0) - lo ** (a + 1.0)) / ((a + 1.0) * (hi - lo))
    return out[()] if out.ndim == 0 else out
