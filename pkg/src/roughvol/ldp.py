"""Short-time large-deviation rate functions and skew asymptotics.

The rate function is the value of the variational problem::

    I(y) = inf_h  1/2 ||h||^2 + (y - rho I1(h))^2 / (2 I2(h))
    I1(h) = int_0^1 f(x_h(t)) h(t) dt,   I2(h) = int_0^1 f(x_h(t))^2 dt

with ``x_h = h_hat = int_0^t K(s,t) h(s) ds`` (simple model) or the solution
of ``x_h(t) = z + int_0^t K(s,t) u(x_h(s)) h(s) ds`` (non-simple model).
Controls are piecewise constant on ``n_grid`` uniform cells of [0, 1]; each
cell is split into ``sub`` intervals on which the kernel is integrated
exactly against the (left-point) integrand and ``I1``, ``I2`` use the
trapezoid rule. Time is fixed to the unit horizon; the speed ``t^(2H)`` and
the scaling ``t^(H - 1/2)`` only enter output labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import solve_triangular

from .errors import ConfigError, DegenerateVolatilityError, NumericError
from .functions import SmoothFunctionFamily
from .kernel import c_h_constant, check_hurst, kernel_prefactor

I2_FLOOR = 1e-12
_PENALTY = 1e30


@dataclass(frozen=True)
class LdpProblem:
    f: SmoothFunctionFamily
    rho: float
    H: float
    u: SmoothFunctionFamily | None = None
    z: float = 0.0
    n_grid: int = 64
    sub: int = 4
    rho_bar_denominator: bool = False

    def __post_init__(self):
        check_hurst(self.H)
        if self.n_grid < 2:
            raise ConfigError("n_grid must be at least 2")
        if self.sub < 1:
            raise ConfigError("sub must be at least 1")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError("correlation must lie in [-1, 1]")
        self.f.require(1)
        if self.u is not None:
            self.u.require(1)


@dataclass
class _Discretization:
    times: np.ndarray  # nodes, (T,)
    G: np.ndarray  # (T, T-1) kernel moments of interval i seen from node k
    cell_of: np.ndarray  # (T-1,) h-cell owning each interval
    delta: float


_DISC_CACHE: dict = {}


def _discretization(H: float, n_grid: int, sub: int) -> _Discretization:
    key = (H, n_grid, sub)
    if key not in _DISC_CACHE:
        n_int = n_grid * sub
        times = np.arange(n_int + 1) / n_int
        a = H + 0.5
        tk = times[:, None]
        lo, hi = times[None, :-1], times[None, 1:]
        G = kernel_prefactor(H) * (np.maximum(tk - lo, 0.0) ** a - np.maximum(tk - hi, 0.0) ** a)
        _DISC_CACHE[key] = _Discretization(times, G, np.arange(n_int) // sub, 1.0 / n_int)
    return _DISC_CACHE[key]


@dataclass
class ControlledPath:
    times: np.ndarray
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def controlled_path(h, H: float, u: SmoothFunctionFamily | None = None, z: float = 0.0, sub: int = 4,
                    tol: float = 1e-10, max_iter: int = 200) -> ControlledPath:
    """``h_hat`` (``u is None``) or the Picard solution ``z^h`` on the node grid."""
    H = check_hurst(H)
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ConfigError("control must be finite")
    disc = _discretization(H, h.size, sub)
    hi = h[disc.cell_of]
    if u is None:
        return ControlledPath(disc.times, disc.G @ hi)
    path = np.full(disc.times.size, float(z))
    for it in range(1, max_iter + 1):
        new = z + disc.G @ (u.eval(0, path[:-1]) * hi)
        residual = float(np.max(np.abs(new - path)))
        path = new
        if residual < tol:
            return ControlledPath(disc.times, path, max(it - 1, 1), residual)
    raise NumericError(f"Picard iteration did not converge in {max_iter} steps (residual {residual:.3g})")


def _objective(h, y, prob: LdpProblem, disc: _Discretization):
    n = h.size
    hi = h[disc.cell_of]
    if prob.u is None:
        path = disc.G @ hi
    else:
        path = controlled_path(h, prob.H, prob.u, prob.z, prob.sub).values
    f0 = prob.f.eval(0, path)
    f1 = prob.f.eval(1, path)
    half = 0.5 * disc.delta
    I1 = float(np.sum(hi * half * (f0[:-1] + f0[1:])))
    I2 = float(half * np.sum(f0[:-1] ** 2 + f0[1:] ** 2))
    if not np.isfinite(I1) or not np.isfinite(I2) or I2 < I2_FLOOR:
        return _PENALTY, np.zeros_like(h), I2
    denom = I2 * (1.0 - prob.rho**2) if prob.rho_bar_denominator else I2
    if denom < I2_FLOOR:
        return _PENALTY, np.zeros_like(h), I2
    resid = y - prob.rho * I1
    value = 0.5 * float(h @ h) / n + resid**2 / (2.0 * denom)

    # gradients of I1, I2 with respect to the node path and directly in h
    touch = np.zeros_like(path)
    touch[:-1] += hi
    touch[1:] += hi
    dI1_dpath = half * f1 * touch
    mult = np.full(path.size, 2.0)
    mult[0] = mult[-1] = 1.0
    dI2_dpath = half * 2.0 * f0 * f1 * mult
    dI1_dh_direct = np.bincount(disc.cell_of, weights=half * (f0[:-1] + f0[1:]), minlength=n)

    c1 = -prob.rho * resid / denom
    c2 = -(resid**2) / (2.0 * denom * I2)
    g_path = c1 * dI1_dpath + c2 * dI2_dpath
    if prob.u is None:
        back = disc.G.T @ g_path
    else:
        zl = path[:-1]
        # (I - G diag(hi u'(z_l)) S)^T adjoint solve; the system is unit lower triangular
        A = -disc.G * (hi * prob.u.eval(1, zl))[None, :]
        A = np.concatenate([A, np.zeros((path.size, 1))], axis=1)
        A[np.diag_indices_from(A)] += 1.0
        adj = solve_triangular(A, g_path, lower=True, trans="T", unit_diagonal=False)
        back = prob.u.eval(0, zl) * (disc.G.T @ adj)
    grad = h / n + c1 * dI1_dh_direct + np.bincount(disc.cell_of, weights=back, minlength=n)
    return value, grad, I2


@dataclass
class RateResult:
    y: float
    value: float
    h: np.ndarray
    converged: bool
    n_starts: int
    best_start: int
    grad_norm: float
    starts: list = field(default_factory=list)


def _starts(y, prob, warm_start):
    f0 = abs(float(prob.f.eval(0, np.asarray(prob.z if prob.u is not None else 0.0))))
    scale = abs(y) / max(f0, 1e-8)
    n = prob.n_grid
    starts = [np.zeros(n), np.full(n, scale), np.full(n, -scale)]
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=float)
        if warm.shape != (n,):
            raise ConfigError("warm start has the wrong length")
        starts.append(warm.copy())
    return starts


def rate_function(y: float, prob: LdpProblem, warm_start=None, gtol: float = 1e-10,
                  maxiter: int = 5000) -> RateResult:
    """Minimize the discretized objective from a fixed set of deterministic starts."""
    y = float(y)
    disc = _discretization(prob.H, prob.n_grid, prob.sub)
    best = None
    diagnostics = []
    for k, h0 in enumerate(_starts(y, prob, warm_start)):
        fun = lambda h: _objective(h, y, prob, disc)[:2]
        res = optimize.minimize(fun, h0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": maxiter})
        value, grad, I2 = _objective(res.x, y, prob, disc)
        ok = I2 >= I2_FLOOR and value < _PENALTY
        gnorm = float(np.max(np.abs(grad)))
        diagnostics.append({"start": k, "value": value, "grad_norm": gnorm, "success": bool(res.success),
                            "nit": int(res.nit), "rejected": not ok})
        if ok and (best is None or value < best[0]):
            best = (value, res.x, k, gnorm, bool(res.success) or gnorm < 1e-6)
    if best is None:
        raise DegenerateVolatilityError(f"every start degenerated (I2 < {I2_FLOOR}) at y={y}")
    value, h, k, gnorm, conv = best
    return RateResult(y, value, h, conv, len(diagnostics), k, gnorm, diagnostics)


def rate_curve(ys, prob: LdpProblem) -> list[RateResult]:
    """Evaluate along ``ys`` in order, warm-starting each point from the previous minimizer."""
    out = []
    warm = None
    for y in ys:
        res = rate_function(y, prob, warm_start=warm)
        out.append(res)
        warm = res.h
    return out


def skew_formula(H: float, rho: float, eta: float, v0: float, t: float) -> float:
    """Short-dated implied-volatility skew for rough Heston: ``rho eta / (2 sqrt(v0)) c_H t^(H-1/2)``."""
    if v0 <= 0 or t <= 0:
        raise ConfigError("need v0 > 0 and t > 0")
    return rho * eta / (2.0 * math.sqrt(v0)) * c_h_constant(H) * t ** (H - 0.5)


def skew_generic(H: float, rho: float, u_at_z: float, fprime_over_f: float, t: float) -> float:
    """Generic non-simple skew ``rho u(z) f'(z)/f(z) c_H t^(H-1/2)``."""
    if t <= 0:
        raise ConfigError("need t > 0")
    return rho * u_at_z * fprime_over_f * c_h_constant(H) * t ** (H - 0.5)
