"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy import integrate, special


def chi2_cdf_quad(k: int, x: float) -> float:
    """Chi-squared CDF by adaptive quadrature of the density."""
    if x <= 0:
        return 0.0
    a = k / 2.0
    logc = -a * math.log(2.0) - math.lgamma(a)

    def pdf(u: float) -> float:
        if u == 0.0:
            return 0.5 if k == 2 else 0.0
        return math.exp(logc + (a - 1.0) * math.log(u) - u / 2.0)

    # split at the mode so quad sees the peak; k = 1 has an integrable u^-1/2 spike
    mode = max(k - 2.0, 0.0)
    pts = sorted({p for p in (mode, k, k + 4 * math.sqrt(2 * k)) if 0 < p < x})
    edges = [0.0, *pts, x]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if k == 1 and lo == 0.0:
            # substitute u = s^2 to remove the singularity
            val, _ = integrate.quad(lambda s: 2 * s * pdf(s * s), 0.0, math.sqrt(hi), epsabs=1e-14, epsrel=1e-13, limit=200)
        else:
            val, _ = integrate.quad(pdf, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += val
    return min(total, 1.0)


def chi2_cdf_scipy(k: int, x: float) -> float:
    return float(special.gammainc(k / 2.0, x / 2.0))


def load_phasor(v_ll_rms: float, R: float, L: float, f: float, line: complex = 0j) -> tuple[float, float]:
    """rms current magnitude (A) and lag angle (deg) of a wye RL load on a stiff source.

    ``line`` is an optional series impedance between source and load.
    """
    z = complex(R, 2 * math.pi * f * L) + line
    i = (v_ll_rms / math.sqrt(3)) / z
    return abs(i), -math.degrees(cmath.phase(i))


def load_power(v_ll_rms: float, R: float, L: float, f: float, line: complex = 0j) -> tuple[float, float]:
    """Three-phase P (W) and Q (var) delivered by the source."""
    irms, _ = load_phasor(v_ll_rms, R, L, f, line)
    z = complex(R, 2 * math.pi * f * L) + line
    return 3 * irms**2 * z.real, 3 * irms**2 * z.imag


def rl_trapezoid_reference(R: float, L: float, dt: float, i0: float, v: np.ndarray) -> np.ndarray:
    """Plain loop over the trapezoidal RL update, one step at a time."""
    out = np.empty(len(v))
    out[0] = i0
    a = L / dt - R / 2
    b = L / dt + R / 2
    for n in range(1, len(v)):
        out[n] = (a * out[n - 1] + 0.5 * (v[n] + v[n - 1])) / b
    return out


def rl_exact_response(R: float, L: float, vpk: float, w: float, t: np.ndarray) -> np.ndarray:
    """Continuous steady-state current of v = vpk cos(w t) through series RL."""
    z = complex(R, w * L)
    return (vpk / abs(z)) * np.cos(w * t - cmath.phase(z))


if __name__ == "__main__":
    print("chi2 k=14 at 23.685:", chi2_cdf_quad(14, 23.685))
    print("phasor:", load_phasor(480.0, 18.432, 24e-3, 60.0))
    print("power:", load_power(480.0, 18.432, 24e-3, 60.0))
    line = complex(0.097, 2 * math.pi * 60 * 88e-6)
    print("phasor with line:", load_phasor(480.0, 18.432, 24e-3, 60.0, line))
    print("power with line:", load_power(480.0, 18.432, 24e-3, 60.0, line))
    for k in (1, 2, 5, 10, 26, 50):
        print(k, chi2_cdf_quad(k, k + 1.3), chi2_cdf_scipy(k, k + 1.3))
