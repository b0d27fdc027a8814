"""Reference values computed independently of the package and frozen here.

Each value was produced with mpmath at 40 significant digits from the
defining expression; ``test_oracles.py`` recomputes them.
"""

# 2^N int over the Haar cell of v of K(r, u) dr, H=0.3, N=4, u=0.7, v=0.2
MOLLIFIED_03_4_07_02 = 0.89675710990081119436

# int_0^1 exp(2 t^(2H)) dt
SECOND_MOMENT_H03 = 3.9235975874569662051
SECOND_MOMENT_H05 = 3.1945280494653251136  # (e^2 - 1) / 2

# 100 (2 Phi(0.1) - 1): at-the-money call, S0 = K = 100, total variance 0.04
BS_ATM_100 = 7.9655674554058

# C_BS(exp(-0.0128), 1, 0.0144): conditional price for rho=-0.8, I=0, V=0.04, S0=K=1
PSI_RHO_M08 = 0.04145076413669331

# sqrt(0.2) * 4 / 0.6 * 0.1^0.6: diagonal renormalization at H=0.1, N=2, t=0.1
RENORM_01_2_01 = 0.74889984168197216

# sqrt(0.1) / (0.55 * 1.55)
C_H_005 = 0.37094166101681869

# 0.1^2 / (2 * 0.04 * 1.64): constant-volatility rate function, sigma=0.2, rho=-0.8, y=0.1
LDP_CONST_02_M08_01 = 0.076219512195121951
