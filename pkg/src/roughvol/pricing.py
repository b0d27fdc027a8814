"""Black-Scholes primitives, the conditional mixing map and the Monte Carlo call pricer."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .estimators import DEFAULT_QUADRATURE, QuadratureConfig, RenormScheme, estimate
from .functions import SmoothFunctionFamily
from .kernel import check_hurst, check_level
from .noise import NoiseBatch, sample_haar_noise

CHUNK_SIZE = 4096
PSI_VARIANTS = ("derived", "paper-sec6")


@dataclass(frozen=True)
class MarketSpec:
    S0: float
    K: float
    rho: float

    def __post_init__(self):
        if not self.S0 > 0:
            raise ConfigError("spot must be positive")
        if self.K < 0:
            raise ConfigError("strike must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("correlation must lie in [-1, 1]")

    @property
    def rho_bar(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.rho**2))


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int
    seed: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)


def mc_summary(samples: np.ndarray, seed: int, **diagnostics) -> MCEstimate:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ConfigError("at least two samples are needed for a standard error")
    value = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return MCEstimate(value, stderr, int(samples.size), int(seed), diagnostics)


def black_scholes_call(S0, K, total_var):
    """``E (S0 exp(sqrt(v) Z - v/2) - K)^+`` for total variance ``v``; zero rates."""
    S0 = np.asarray(S0, dtype=float)
    K = np.asarray(K, dtype=float)
    v = np.asarray(total_var, dtype=float)
    if np.any(v < 0):
        raise ConfigError("total variance must be nonnegative")
    sd = np.sqrt(v)
    intrinsic = np.maximum(S0 - K, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = (np.log(S0 / K) + 0.5 * v) / sd
        d2 = d1 - sd
        price = S0 * ndtr(d1) - K * ndtr(d2)
    price = np.where(K == 0, S0, price)
    price = np.where((sd == 0) & (K > 0), intrinsic, price)
    return price[()] if price.ndim == 0 else price


def psi(i_val, v_val, mkt: MarketSpec, variant: str = "derived"):
    """Call price conditional on the volatility driver.

    ``variant='derived'`` passes the residual total variance ``rho_bar^2 V``;
    ``'paper-sec6'`` passes ``rho_bar^2 V / 2`` for figure-replication runs.
    """
    if variant not in PSI_VARIANTS:
        raise ConfigError(f"unknown psi variant {variant!r}")
    i_val = np.asarray(i_val, dtype=float)
    v_val = np.asarray(v_val, dtype=float)
    rho = mkt.rho
    spot = mkt.S0 * np.exp(rho * i_val - 0.5 * rho**2 * v_val)
    residual = (1.0 - rho**2) * v_val
    if variant == "paper-sec6":
        residual = 0.5 * residual
    return black_scholes_call(spot, mkt.K, residual)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("ROUGHVOL_THREADS", "1"))
    return max(1, int(threads))


def map_chunks(fn, n_samples: int, threads: int | None = None, chunk: int = CHUNK_SIZE):
    """Apply ``fn(start, count)`` to consecutive sample chunks; results in chunk order."""
    bounds = [(lo, min(chunk, n_samples - lo)) for lo in range(0, n_samples, chunk)]
    threads = resolve_threads(threads)
    if threads == 1 or len(bounds) == 1:
        return [fn(lo, n) for lo, n in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def call_payoffs(noise: NoiseBatch, mkt: MarketSpec, H, f, scheme, q, psi_variant="derived"):
    """Conditional prices ``Psi(I_tilde, V)`` for every sample in ``noise``, plus the clamp count."""
    out = estimate(noise, H, f, scheme, q)
    return psi(out.i_tilde, out.v_hat, mkt, psi_variant), out.clamped


def price_call_mc(mkt: MarketSpec, H: float, N: int, f: SmoothFunctionFamily,
                  scheme=RenormScheme.NONCONSTANT, q: QuadratureConfig = DEFAULT_QUADRATURE,
                  M_samples: int = 10_000, seed: int = 0, *, psi_variant: str = "derived",
                  threads: int | None = None) -> MCEstimate:
    H = check_hurst(H)
    N = check_level(N)
    if M_samples < 2:
        raise ConfigError("M_samples must be at least 2")

    def work(start, count):
        noise = sample_haar_noise(N, count, seed, start_id=start)
        return call_payoffs(noise, mkt, H, f, scheme, q, psi_variant)

    parts = map_chunks(work, M_samples, threads)
    payoffs = np.concatenate([p for p, _ in parts])
    return mc_summary(payoffs, seed, clamped=sum(c for _, c in parts))
