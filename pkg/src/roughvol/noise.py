"""Haar white noise, the induced Riemann-Liouville fBM, and a Cholesky reference sampler.

A level-N sample is a vector of ``2**N`` i.i.d. standard normals ``Z_i``;
the noise is ``Wdot_eps = sum_i Z_i 2^(N/2) 1[i eps, (i+1) eps)`` and the fBM
approximation is ``W_hat_eps(t) = sum_i Z_i e_hat_i(t)`` with::

    e_hat_i(t) = 1{t > i eps} sqrt(2H) 2^(N/2) / (H + 1/2)
                 * (|t - i eps|^(H+1/2) - |t - min((i+1) eps, t)|^(H+1/2))

Normals come from a Philox counter generator keyed by ``(seed, sample_id)``;
coefficient ``i`` of a sample is the ``i``-th draw of that stream, so any
sample can be regenerated on its own.
"""
from __future__ import annotations

import csv
import functools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtri

from .errors import ConfigError, NumericError
from .kernel import N_MAX, cell_index, check_hurst, check_level, kernel_prefactor

_MASK64 = (1 << 64) - 1


def standard_normals(seed: int, sample_ids, n: int) -> np.ndarray:
    """Return an array ``(len(sample_ids), n)`` of standard normals.

    Row ``r`` depends only on ``(seed, sample_ids[r])``. Uniforms use the top
    53 bits of each raw draw, shifted to the open interval, then the inverse
    normal CDF.
    """
    ids = np.atleast_1d(np.asarray(sample_ids, dtype=np.int64))
    out = np.empty((ids.size, n))
    key0 = int(seed) & _MASK64
    for r, sid in enumerate(ids):
        bitgen = np.random.Philox(key=[key0, int(sid) & _MASK64])
        raw = bitgen.random_raw(n)
        out[r] = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(out, out=out)


@dataclass(frozen=True)
class HaarWhiteNoise:
    level: int
    coeffs: np.ndarray
    seed: int = 0
    sample_id: int = 0

    def __post_init__(self):
        if self.coeffs.shape != (2**self.level,):
            raise ConfigError(f"expected {2**self.level} coefficients, got shape {self.coeffs.shape}")


@dataclass(frozen=True)
class NoiseBatch(Sequence):
    """Several Haar samples stacked row-wise: ``coeffs`` has shape ``(count, 2**level)``."""

    level: int
    coeffs: np.ndarray
    seed: int = 0
    sample_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != 2**self.level:
            raise ConfigError(f"coefficient array has shape {self.coeffs.shape}, level {self.level}")
        if self.sample_ids is None:
            object.__setattr__(self, "sample_ids", np.arange(self.coeffs.shape[0], dtype=np.int64))

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return NoiseBatch(self.level, self.coeffs[i], self.seed, self.sample_ids[i])
        return HaarWhiteNoise(self.level, self.coeffs[i], self.seed, int(self.sample_ids[i]))


def sample_haar_noise(N: int, count: int, seed: int, start_id: int = 0, n_max: int = N_MAX) -> NoiseBatch:
    N = check_level(N, n_max)
    if count < 1:
        raise ConfigError("count must be >= 1")
    ids = np.arange(start_id, start_id + count, dtype=np.int64)
    return NoiseBatch(N, standard_normals(seed, ids, 2**N), int(seed), ids)


def coarsen_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Pairwise merge along the last axis: ``(Z_2i + Z_2i+1) / sqrt(2)``."""
    if coeffs.shape[-1] < 2:
        raise ConfigError("cannot coarsen a level-0 sample")
    return (coeffs[..., 0::2] + coeffs[..., 1::2]) / math.sqrt(2.0)


def coarsen(noise):
    if noise.level == 0:
        raise ConfigError("cannot coarsen a level-0 sample")
    if isinstance(noise, NoiseBatch):
        return NoiseBatch(noise.level - 1, coarsen_coeffs(noise.coeffs), noise.seed, noise.sample_ids)
    return HaarWhiteNoise(noise.level - 1, coarsen_coeffs(noise.coeffs), noise.seed, noise.sample_id)


def basis_values(H: float, N: int, t) -> np.ndarray:
    """Matrix of ``e_hat_i(t)``: shape ``(len(t), 2**N)``."""
    a = H + 0.5
    eps = 2.0**-N
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    left = np.arange(2**N) * eps
    right = np.minimum(left + eps, t)
    active = t > left
    body = np.abs(t - left) ** a - np.abs(t - right) ** a
    return np.where(active, kernel_prefactor(H) * 2.0 ** (N / 2) * body, 0.0)


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ConfigError("time must lie in [0, 1]")
    return arr


def fbm_eval(noise, H: float, t):
    """Evaluate ``W_hat_eps`` at time(s) ``t`` for one sample or a batch."""
    H = check_hurst(H)
    arr = _check_time(t)
    vals = noise.coeffs @ basis_values(H, noise.level, arr.ravel()).T
    if arr.ndim == 0:
        return vals[..., 0] if vals.ndim > 1 else float(vals[0])
    return vals


def wdot_eval(noise, t):
    """Piecewise-constant white-noise approximation; ``t = 1`` reads the last cell."""
    arr = _check_time(t)
    N = noise.level
    idx = np.minimum(np.asarray(cell_index(arr, N)), 2**N - 1)
    vals = 2.0 ** (N / 2) * noise.coeffs[..., idx]
    if np.ndim(vals) == 0:
        return float(vals)
    return vals


def _shape_functions(H: float, N: int, sigma: np.ndarray) -> np.ndarray:
    """``g[m, j]``: contribution of ``Z_(l-m)`` to ``W_hat_eps((l + sigma_j) eps)``.

    Uses ``x^a - (x-1)^a = -x^a expm1(a log1p(-1/x))`` to avoid cancellation
    far from the diagonal.
    """
    a = H + 0.5
    m = np.arange(2**N, dtype=float)[:, None]
    x = m + sigma[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        far = -(x**a) * np.expm1(a * np.log1p(-1.0 / x))
    g = np.where(m >= 1.0, far, x**a)
    return kernel_prefactor(H) * 2.0 ** (N / 2 - N * a) * g


@functools.lru_cache(maxsize=32)
def _spectral_table(H: float, N: int, d: int):
    sigma = np.linspace(0.0, 1.0, d)
    g = _shape_functions(H, N, sigma)
    L = 2 ** (N + 1)
    g_hat = np.fft.rfft(g, n=L, axis=0).T.copy()  # (d, F)
    g_hat.setflags(write=False)
    return g_hat


def fbm_on_cells(coeffs: np.ndarray, H: float, d: int) -> np.ndarray:
    """``W_hat_eps`` on ``d`` equispaced nodes (both ends included) of every cell.

    ``coeffs`` has shape ``(B, 2**N)``; the result has shape ``(B, 2**N, d)``.
    The lower-triangular Toeplitz sum is done by FFT convolution with the
    shape-function spectra, which are cached per ``(H, N, d)``.
    """
    B, n_cells = coeffs.shape
    N = int(round(math.log2(n_cells)))
    g_hat = _spectral_table(float(H), N, int(d))
    L = 2 ** (N + 1)
    out = np.empty((B, n_cells, d))
    block = max(1, (1 << 21) // (d * g_hat.shape[1]))
    for lo in range(0, B, block):
        z_hat = np.fft.rfft(coeffs[lo:lo + block], n=L, axis=1)
        conv = np.fft.irfft(z_hat[:, None, :] * g_hat[None, :, :], n=L, axis=2)
        out[lo:lo + block] = conv[:, :, :n_cells].transpose(0, 2, 1)
    return out


# ---------------------------------------------------------------------------
# Exact joint law of (W, W_hat) on a grid


@dataclass(frozen=True)
class JointGaussianGrid:
    H: float
    grid: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter: float = 0.0


def _fbm_cross_integral(H: float, s: float, t: float, tol: float) -> float:
    """``2H int_0^min ((s-r)(t-r))^(H-1/2) dr`` for ``s != t``.

    Substituting ``r = min - x^(1/a)`` removes the endpoint singularity and
    leaves the smooth integrand ``(2H/a) (max - min + x^(1/a))^(H-1/2)``.
    """
    a = H + 0.5
    lo, hi = min(s, t), max(s, t)
    gap = hi - lo
    val, err, info = integrate.quad(
        lambda x: (gap + x ** (1.0 / a)) ** (H - 0.5),
        0.0, lo**a, epsabs=tol, epsrel=1e-12, limit=200, full_output=1,
    )[:3]
    if err > 100 * tol:
        raise NumericError(f"covariance quadrature did not converge at (s={s}, t={t}): "
                           f"estimate={val}, abserr={err}, evaluations={info['neval']}")
    return 2.0 * H / a * val


def build_joint_covariance(H: float, grid, tol: float = 1e-10, max_escalations: int = 3) -> JointGaussianGrid:
    H = check_hurst(H)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] > 1:
        raise ConfigError("grid must be strictly increasing in (0, 1]")
    n = grid.size
    a = H + 0.5
    s, t = np.meshgrid(grid, grid, indexing="ij")
    ww = np.minimum(s, t)
    # Cov(W_s, W_hat_t) = int_0^{s^t} K(r, t) dr
    w_wh = kernel_prefactor(H) * (t**a - (t - np.minimum(s, t)) ** a)
    wh = np.empty((n, n))
    for i in range(n):
        wh[i, i] = grid[i] ** (2 * H)
        for j in range(i + 1, n):
            if H == 0.5:
                wh[i, j] = grid[i]
            else:
                wh[i, j] = _fbm_cross_integral(H, grid[i], grid[j], tol)
            wh[j, i] = wh[i, j]
    cov = np.block([[ww, w_wh], [w_wh.T, wh]])

    base = 1e-12 * np.trace(cov) / (2 * n)
    jitters = [0.0] + [base * 10.0**k for k in range(max_escalations + 1)]
    for jit in jitters:
        try:
            chol = np.linalg.cholesky(cov + jit * np.eye(2 * n))
        except np.linalg.LinAlgError:
            continue
        return JointGaussianGrid(H, grid, cov, chol, jit)
    raise NumericError(f"joint covariance not positive definite within jitter budget {jitters[-1]:.3g}")


def sample_joint(jg: JointGaussianGrid, count: int, seed: int, start_id: int = 0):
    """Draw ``count`` joint paths; returns ``(W, W_hat)``, each of shape ``(count, n)``."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    n = jg.grid.size
    xi = standard_normals(seed, np.arange(start_id, start_id + count), 2 * n)
    paths = xi @ jg.chol.T
    return paths[:, :n], paths[:, n:]


def write_paths_csv(path, sample_ids, times, first, second, *, haar: bool, header_lines=()):
    """Dump paths in long format, one row per (sample, time)."""
    cols = ("sample_id", "t", "Wdot_eps", "W_hat_eps") if haar else ("sample_id", "t", "W", "W_hat")
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r, sid in enumerate(sample_ids):
            for k, tk in enumerate(times):
                writer.writerow([int(sid), repr(float(tk)), repr(float(first[r, k])), repr(float(second[r, k]))])
