"""Empirical convergence-rate studies on common random numbers.

Every study draws one level-``N_ref`` coefficient array per sample and
derives all coarser levels from it by :func:`~roughvol.noise.coarsen_coeffs`,
so level-to-level differences measure pathwise distance.
"""
from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .errors import ConfigError
from .estimators import DEFAULT_QUADRATURE, QuadratureConfig, RenormScheme, estimate
from .functions import SmoothFunctionFamily, bergomi_family
from .kernel import check_hurst, check_level
from .noise import NoiseBatch, coarsen_coeffs, sample_haar_noise
from .pricing import MarketSpec, map_chunks, psi

ZERO_ERROR_RTOL = 1e-12


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci95: tuple[float, float]
    n_points: int


def fit_rate(points) -> RateFit:
    """OLS of log error on log eps; rows with zero error are dropped with a warning."""
    pts = [(float(x), float(y)) for x, y in points]
    kept = [(x, y) for x, y in pts if np.isfinite(y)]
    if len(kept) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(kept)} zero-error point(s) from the rate fit", RuntimeWarning,
                      stacklevel=2)
    if len(kept) < 3:
        raise ConfigError(f"need at least 3 usable points for a rate fit, got {len(kept)}")
    x = np.array([p[0] for p in kept])
    y = np.array([p[1] for p in kept])
    if np.unique(x).size != x.size:
        raise ConfigError("rate fit abscissae must be distinct")
    res = stats.linregress(x, y)
    dof = x.size - 2
    if dof > 0 and np.isfinite(res.stderr):
        half = stats.t.ppf(0.975, dof) * res.stderr
    else:
        half = 0.0
    return RateFit(float(res.slope), float(res.intercept), (res.slope - half, res.slope + half), int(x.size))


@dataclass
class RateRow:
    N: int
    eps: float
    error: float
    stderr: float


@dataclass
class RateStudyResult:
    study: str
    H: float
    rows: list[RateRow]
    fitted_rate: float
    rate_ci95: tuple[float, float]
    intercept: float = math.nan
    n_points: int = 0
    config: dict = field(default_factory=dict)
    excluded: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    audit: dict = field(default_factory=dict)


def _levels(N_list, N_ref=None):
    levels = sorted({check_level(n) for n in N_list}, reverse=True)
    if not levels:
        raise ConfigError("N_list is empty")
    if N_ref is not None:
        check_level(N_ref)
        if N_ref <= levels[0]:
            raise ConfigError(f"N_ref={N_ref} must exceed max(N_list)={levels[0]}")
    return levels


def _finish(study, H, levels, errors, stderrs, scale, config, audit) -> RateStudyResult:
    rows = [RateRow(N, 2.0**-N, float(errors[N]), float(stderrs[N])) for N in sorted(levels)]
    excluded = [r.N for r in rows if r.error <= ZERO_ERROR_RTOL * max(1.0, scale)]
    pts = [(math.log(r.eps), math.log(r.error) if r.N not in excluded else -math.inf) for r in rows]
    flags = []
    for a, b in zip(rows, rows[1:]):
        if b.error > a.error + 2.0 * max(a.stderr, b.stderr) and a.N not in excluded:
            flags.append(f"non-monotone: error(N={b.N}) > error(N={a.N}) beyond 2 stderr")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_rate(pts)
        slope, icpt, ci, npts = fit.slope, fit.intercept, fit.ci95, fit.n_points
    except ConfigError as exc:
        slope, icpt, ci, npts = math.nan, math.nan, (math.nan, math.nan), 0
        flags.append(f"no rate fit: {exc}")
    return RateStudyResult(study, H, rows, slope, ci, icpt, npts, dict(config), excluded, flags, audit)


class _Audit:
    """Order-stable digest of the coefficient arrays each level was computed from."""

    def __init__(self):
        self.parts: dict[int, list[str]] = {}

    def add(self, chunk_digests: dict):
        for N, dig in chunk_digests.items():
            self.parts.setdefault(N, []).append(dig)

    def result(self):
        return {N: hashlib.sha256("".join(d).encode()).hexdigest() for N, d in sorted(self.parts.items())}


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _level_walk(coeffs: np.ndarray, top: int, wanted):
    """Yield ``(N, coeffs_at_N)`` from ``top`` down to ``min(wanted)``, coarsening as needed."""
    cur = coeffs
    for N in range(top, min(wanted) - 1, -1):
        if N != top:
            cur = coarsen_coeffs(cur)
        if N in wanted or N == top:
            yield N, cur


def strong_error_study(H_list, N_list, N_ref: int, f: SmoothFunctionFamily, scheme=RenormScheme.NONCONSTANT,
                       M_samples: int = 10_000, q: QuadratureConfig = DEFAULT_QUADRATURE, seed: int = 0,
                       threads: int | None = None) -> list[RateStudyResult]:
    """``error(N) = || I_tilde(N) - I_tilde(N_ref) ||_L2`` on shared samples."""
    levels = _levels(N_list, N_ref)
    if M_samples < 2:
        raise ConfigError("M_samples must be at least 2")
    scheme = RenormScheme(scheme)
    results = []
    for H in H_list:
        H = check_hurst(H)

        def work(start, count, H=H):
            base = sample_haar_noise(N_ref, count, seed, start_id=start).coeffs
            diffs, digests, ref = {}, {}, None
            for N, coeffs in _level_walk(base, N_ref, set(levels)):
                digests[N] = _digest(coeffs)
                val = estimate(NoiseBatch(N, coeffs), H, f, scheme, q).i_tilde
                if N == N_ref:
                    ref = val
                else:
                    diffs[N] = (val - ref) ** 2
            return diffs, digests, float(np.sum(ref**2))

        parts = map_chunks(work, M_samples, threads)
        audit = _Audit()
        for _, dig, _ in parts:
            audit.add(dig)
        ref_rms = math.sqrt(sum(p[2] for p in parts) / M_samples)
        errors, stderrs = {}, {}
        for N in levels:
            sq = np.concatenate([p[0][N] for p in parts])
            mse = float(np.mean(sq))
            errors[N] = math.sqrt(mse)
            # delta method for sqrt of a mean
            stderrs[N] = math.sqrt(np.var(sq, ddof=1) / (4.0 * mse * M_samples)) if mse > 0 else 0.0
        cfg = {"H": H, "N_list": sorted(levels), "N_ref": N_ref, "f": f.descriptor, "scheme": scheme.value,
               "M": M_samples, "seed": seed, "quadrature": _q_label(q)}
        results.append(_finish("strong", H, levels, errors, stderrs, ref_rms, cfg, audit.result()))
    return results


def second_moment_reference(H: float, tol: float = 1e-13) -> float:
    """``int_0^1 exp(2 t^(2H)) dt``, the Ito-isometry value of ``E[(int exp(W_hat) dW)^2]``."""
    H = check_hurst(H)
    val, err = integrate.quad(lambda t: math.exp(2.0 * t ** (2.0 * H)), 0.0, 1.0, epsabs=tol, epsrel=tol,
                              limit=200)
    return val


def weak_second_moment_study(H: float, N_list, f: SmoothFunctionFamily, scheme=RenormScheme.NONCONSTANT,
                             M_samples: int = 100_000, q: QuadratureConfig = DEFAULT_QUADRATURE, seed: int = 0,
                             threads: int | None = None) -> RateStudyResult:
    if f.name != "exp":
        raise ConfigError("the second-moment identity is specific to f = exp")
    H = check_hurst(H)
    levels = _levels(N_list)
    top = levels[0]
    scheme = RenormScheme(scheme)
    target = second_moment_reference(H)

    def work(start, count):
        base = sample_haar_noise(top, count, seed, start_id=start).coeffs
        return {N: estimate(NoiseBatch(N, c), H, f, scheme, q).i_tilde ** 2
                for N, c in _level_walk(base, top, set(levels))}

    parts = map_chunks(work, M_samples, threads)
    errors, stderrs = {}, {}
    for N in levels:
        sq = np.concatenate([p[N] for p in parts])
        errors[N] = abs(float(np.mean(sq)) - target)
        stderrs[N] = float(np.std(sq, ddof=1) / math.sqrt(M_samples))
    cfg = {"H": H, "N_list": sorted(levels), "f": f.descriptor, "scheme": scheme.value, "M": M_samples,
           "seed": seed, "quadrature": _q_label(q), "reference": target}
    return _finish("weak", H, levels, errors, stderrs, target, cfg, {})


def option_rate_study(mkt: MarketSpec, H_list, N_list, N_ref: int, sigma0: float = 0.2, eta: float = 2.0,
                      M_samples: int = 10_000, q: QuadratureConfig = DEFAULT_QUADRATURE, seed: int = 0,
                      scheme=RenormScheme.NONCONSTANT, f: SmoothFunctionFamily | None = None,
                      psi_variant: str = "derived", threads: int | None = None) -> list[RateStudyResult]:
    """``error(N) = |C(N) - C(N_ref)|`` with both prices on the same samples."""
    levels = _levels(N_list, N_ref)
    if M_samples < 2:
        raise ConfigError("M_samples must be at least 2")
    f = bergomi_family(sigma0, eta) if f is None else f
    scheme = RenormScheme(scheme)
    results = []
    for H in H_list:
        H = check_hurst(H)

        def work(start, count, H=H):
            base = sample_haar_noise(N_ref, count, seed, start_id=start).coeffs
            pay = {}
            for N, coeffs in _level_walk(base, N_ref, set(levels)):
                out = estimate(NoiseBatch(N, coeffs), H, f, scheme, q)
                pay[N] = psi(out.i_tilde, out.v_hat, mkt, psi_variant)
            return pay

        parts = map_chunks(work, M_samples, threads)
        ref = np.concatenate([p[N_ref] for p in parts])
        errors, stderrs = {}, {}
        for N in levels:
            diff = np.concatenate([p[N] for p in parts]) - ref
            errors[N] = abs(float(np.mean(diff)))
            stderrs[N] = float(np.std(diff, ddof=1) / math.sqrt(M_samples))
        cfg = {"H": H, "N_list": sorted(levels), "N_ref": N_ref, "f": f.descriptor, "scheme": scheme.value,
               "M": M_samples, "seed": seed, "quadrature": _q_label(q), "S0": mkt.S0, "K": mkt.K,
               "rho": mkt.rho, "psi_variant": psi_variant, "reference_price": float(np.mean(ref))}
        results.append(_finish("option", H, levels, errors, stderrs, float(np.mean(ref)), cfg, {}))
    return results


def _q_label(q: QuadratureConfig) -> str:
    return f"d={q.d}" if q.d is not None else f"delta={q.delta!r}"


# ---------------------------------------------------------------------------
# CSV output

ROW_HEADER = ("study", "H", "N", "eps", "error", "stderr")
SUMMARY_HEADER = ("study", "H", "fitted_rate", "ci_lo", "ci_hi", "n_points", "M", "seed")
PLOT_HEADER = ("H", "N", "eps", "log2_eps", "error", "log2_error", "band_lo", "band_hi", "fit_log2_error")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_rows_csv(fh, results, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ROW_HEADER)
    for res in results:
        for r in res.rows:
            w.writerow([res.study, _fmt(res.H), r.N, _fmt(r.eps), _fmt(r.error), _fmt(r.stderr)])


def write_summary_csv(fh, results, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for res in results:
        w.writerow([res.study, _fmt(res.H), _fmt(res.fitted_rate), _fmt(res.rate_ci95[0]), _fmt(res.rate_ci95[1]),
                    res.n_points, res.config.get("M", ""), res.config.get("seed", "")])


def write_plot_csv(fh, results, header_lines=()):
    """Log-log data for one figure: points, 95% normal bands and the fitted line."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    ln2 = math.log(2.0)
    for res in results:
        for r in res.rows:
            lo = max(r.error - 1.96 * r.stderr, 0.0)
            hi = r.error + 1.96 * r.stderr
            fit = (res.intercept + res.fitted_rate * math.log(r.eps)) / ln2 if res.n_points else math.nan
            log_err = math.log2(r.error) if r.error > 0 else -math.inf
            w.writerow([_fmt(res.H), r.N, _fmt(r.eps), _fmt(math.log2(r.eps)), _fmt(r.error), _fmt(log_err),
                        _fmt(lo), _fmt(hi), _fmt(fit)])
