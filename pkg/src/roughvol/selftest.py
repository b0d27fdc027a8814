"""Quick closed-form checks run by ``roughvol selftest``."""
from __future__ import annotations

import math

import numpy as np

from . import kernel, noise
from .estimators import QuadratureConfig, itilde, ito_reference_sum, vhat
from .functions import constant_family, exp_family
from .harness import fit_rate
from .ldp import LdpProblem, controlled_path, rate_function, skew_formula
from .pricing import MarketSpec, black_scholes_call, psi


def _checks():
    nb = noise.sample_haar_noise(3, 4, 11)
    q = QuadratureConfig(d=5)
    c = constant_family(0.7)
    yield "kernel H=1/2 is the indicator", kernel.volterra_kernel(0.5, 0.0, 1.0) == 1.0
    yield "kernel vanishes for t <= s", kernel.volterra_kernel(0.3, 1.0, 0.5) == 0.0
    yield "renormalization vanishes on the grid", kernel.renorm_nonconstant(0.3, 4, 5 / 16) == 0.0
    yield "mean renormalization at H=1/2 is 1/2", all(kernel.renorm_constant(0.5, n) == 0.5 for n in range(8))
    yield "mollified kernel vanishes before the cell", kernel.mollified_kernel_haar(0.3, 3, 0.1, 0.9) == 0.0
    yield "noise regenerates bit-exactly", np.array_equal(noise.sample_haar_noise(3, 4, 11).coeffs, nb.coeffs)
    yield "coarsening zero gives zero", not np.any(noise.coarsen(noise.NoiseBatch(3, np.zeros((1, 8)))).coeffs)
    yield "W_hat(0) = 0", np.all(noise.fbm_eval(nb, 0.3, 0.0) == 0.0)
    lhs = 2.0**-3 * np.sum(noise.wdot_eval(nb, (np.arange(8) + 0.5) / 8), axis=-1)
    yield "cell integral of Wdot is W(1)", np.allclose(lhs, 2.0**-1.5 * nb.coeffs.sum(axis=1), atol=1e-14)
    yield "I_tilde of a constant is c W(1)", np.allclose(itilde(nb, 0.3, c, q=q), 0.7 * 2.0**-1.5 * nb.coeffs.sum(1),
                                                          atol=1e-14)
    yield "V of a constant is c^2 t", np.allclose(vhat(nb, 0.3, c, q=q, t_end=0.5), 0.49 * 0.5, atol=1e-14)
    yield "Ito sum at N=0 is f(0) Z0", math.isclose(
        ito_reference_sum(noise.HaarWhiteNoise(0, np.array([0.8])), 0.3, exp_family()), 0.8)
    yield "BS with zero strike is spot", black_scholes_call(1.3, 0.0, 0.2) == 1.3
    yield "BS with zero variance is intrinsic", black_scholes_call(1.0, 1.0, 0.0) == 0.0
    mkt = MarketSpec(1.0, 0.9, 0.0)
    yield "psi ignores I when rho=0", psi(0.3, 0.04, mkt) == psi(-1.0, 0.04, mkt)
    yield "zero control gives zero path", not np.any(controlled_path(np.zeros(4), 0.3).values)
    yield "rate function vanishes at 0", rate_function(0.0, LdpProblem(exp_family(), -0.5, 0.3, n_grid=8)).value == 0
    yield "skew vanishes for rho=0", skew_formula(0.3, 0.0, 1.0, 0.04, 0.5) == 0.0
    eps = 2.0 ** -np.arange(3, 8)
    yield "rate fit of an exact power law", math.isclose(fit_rate(zip(np.log(eps), 0.3 * np.log(eps))).slope, 0.3,
                                                         abs_tol=1e-12)


def run(stream) -> bool:
    ok = True
    rows = []
    for name, passed in _checks():
        passed = bool(passed)
        ok &= passed
        rows.append((name, "PASS" if passed else "FAIL"))
    width = max(len(n) for n, _ in rows)
    for name, status in rows:
        stream.write(f"{name:<{width}}  {status}\n")
    stream.write(f"{sum(s == 'PASS' for _, s in rows)}/{len(rows)} checks passed\n")
    return ok
