"""Monte Carlo laboratory for rough volatility via renormalized Wong-Zakai approximations on a Haar grid."""

__version__ = "0.1.0"

from .errors import (CapacityError, ConfigError, ContractError, DegenerateVolatilityError, DivergedError,
                     NumericError, RoughVolError)
from .estimators import QuadratureConfig, RenormScheme, estimate, ito_reference_sum, itilde, jtilde, vhat
from .functions import (SmoothFunctionFamily, bergomi_family, constant_family, exp_family, linear_family,
                        min_level_M, parse_family, power_family, sqrt_family)
from .harness import (RateStudyResult, fit_rate, option_rate_study, second_moment_reference, strong_error_study,
                      weak_second_moment_study)
from .kernel import (c_h_constant, mollified_kernel_haar, renorm_constant, renorm_nonconstant,
                     volterra_kernel)
from .ldp import LdpProblem, controlled_path, rate_function, skew_formula, skew_generic
from .noise import (HaarWhiteNoise, NoiseBatch, build_joint_covariance, coarsen, fbm_eval, sample_haar_noise,
                    sample_joint, wdot_eval)
from .pricing import MarketSpec, MCEstimate, black_scholes_call, price_call_mc, psi
from .volterra import VolterraCoeffs, solve_volterra

__all__ = [
    "CapacityError", "ConfigError", "ContractError", "DegenerateVolatilityError", "DivergedError", "NumericError",
    "RoughVolError", "QuadratureConfig", "RenormScheme", "estimate", "ito_reference_sum", "itilde", "jtilde", "vhat",
    "SmoothFunctionFamily", "bergomi_family", "constant_family", "exp_family", "linear_family", "min_level_M",
    "parse_family", "power_family", "sqrt_family", "RateStudyResult", "fit_rate", "option_rate_study",
    "second_moment_reference", "strong_error_study", "weak_second_moment_study", "c_h_constant",
    "mollified_kernel_haar", "renorm_constant", "renorm_nonconstant", "volterra_kernel", "LdpProblem",
    "controlled_path", "rate_function", "skew_formula", "skew_generic", "HaarWhiteNoise", "NoiseBatch",
    "build_joint_covariance", "coarsen", "fbm_eval", "sample_haar_noise", "sample_joint", "wdot_eval", "MarketSpec",
    "MCEstimate", "black_scholes_call", "price_call_mc", "psi", "VolterraCoeffs", "solve_volterra",
]
