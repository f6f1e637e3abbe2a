import math
import os

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx


def mittag_leffler_series(alpha, z, terms=400):
    """E_alpha(-z) summed in extended precision, for moderate z."""
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for k in range(terms):
            total += (-mpmath.mpf(z)) ** k / mpmath.gamma(alpha * k + 1)
        return float(total)


def _spectral_density(r, alpha, lam):
    ra = r ** alpha
    denominator = ra * ra + 2 * lam * ra * math.cos(alpha * math.pi) + lam ** 2
    return lam * r ** (alpha - 1) * math.sin(alpha * math.pi) / (math.pi * denominator)


def mittag_leffler_oracle(alpha, lam, t):
    """E_alpha(-lam t^alpha) for 0 < alpha <= 1 without Laplace inversion."""
    if t == 0:
        return 1.0
    if alpha == 1:
        return math.exp(-lam * t)
    if alpha == 0.5:
        return float(erfcx(lam * math.sqrt(t)))
    if lam * t ** alpha <= 2:
        return mittag_leffler_series(alpha, lam * t ** alpha)

    def integrand(r):
        return math.exp(-r * t) * _spectral_density(r, alpha, lam)

    head = quad(integrand, 0.0, 1.0, limit=200, epsabs=1e-13)[0]
    tail = quad(integrand, 1.0, math.inf, limit=200, epsabs=1e-13)[0]
    return head + tail


def relative_l2(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def write_scenario(directory, text, name="scenario.ini"):
    path = os.path.join(str(directory), name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def read_rows(path):
    with open(path) as fh:
        return [line.rstrip("\n").split(",") for line in fh if line.strip()]
