"""Angular eigenfunctions of the weighted extension problem on the half plane.

``q(r, theta) = r^(s+nu) Theta_nu(theta)`` solves
``div(|y|^(1-2s) grad q) = 0`` off ``{y = 0, x < 0}``, with vanishing
weighted Neumann trace on ``{y = 0, x > 0}`` and ``Theta_nu(pi) = 0``.  In the
variable ``x = (1 - cos theta) / 2`` the family is a Jacobi system with weight
``x^(-s) (1 - x)^s``, which is what every quadrature below integrates against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad

__all__ = [
    "ExtensionMode",
    "hyp_poly",
    "theta",
    "orthogonality",
    "gram_matrix",
    "extension_residual",
    "extension_samples",
    "neumann_trace",
    "ring_norm",
]


def _coefficients(nu: int, s: float) -> np.ndarray:
    """Power-series coefficients of 2F1(-nu, nu+1; 1-s; x)."""
    c = [1.0]
    for k in range(nu):
        c.append(c[-1] * (k - nu) * (nu + 1 + k) / ((1.0 - s + k) * (k + 1)))
    return np.array(c)


def hyp_poly(nu: int, s: float, x) -> np.ndarray:
    """Terminating hypergeometric factor, a polynomial of degree ``nu`` in ``x``."""
    c = _coefficients(nu, s)
    return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), c)


def _weighted_integral(f, s: float, right: float | None = None) -> float:
    # int_0^1 f(x) x^(-s) (1-x)^right dx (right defaults to s), adaptive with
    # algebraic end weights
    b = s if right is None else right
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once it reaches machine precision; the
        # returned error estimate is checked instead
        warnings.simplefilter("ignore", IntegrationWarning)
        val, err = quad(f, 0.0, 1.0, weight="alg", wvar=(-s, b), epsabs=1e-14, epsrel=1e-13, limit=200)
    if err > 1e-8 * max(1.0, abs(val)):
        raise ArithmeticError(f"weighted quadrature error estimate {err:.2e} too large")
    return val


@dataclass(frozen=True)
class ExtensionMode:
    """Mode ``nu`` of order ``s``; ``normalization`` makes
    ``int_0^pi Theta^2 sin^(1-2s) = 1``."""

    nu: int
    s: float
    normalization: float = field(default=math.nan)

    def __post_init__(self):
        if int(self.nu) != self.nu or self.nu < 0:
            raise ValueError("nu must be a nonnegative integer")
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if math.isnan(self.normalization):
            c = _coefficients(int(self.nu), self.s)
            nrm2 = 2.0 ** (1.0 - 2.0 * self.s) * _weighted_integral(lambda x: np.polynomial.polynomial.polyval(x, c) ** 2, self.s)
            object.__setattr__(self, "normalization", 1.0 / math.sqrt(nrm2))

    @property
    def degree(self) -> int:
        return int(self.nu)


def theta(mode: ExtensionMode, th) -> np.ndarray | float:
    """``Theta_nu(theta) = C |cos(theta/2)|^(2s) 2F1(-nu, nu+1; 1-s; (1-cos theta)/2)``.

    Evaluated through ``x = (1 - cos theta)/2`` so that ``theta = +-pi`` gives
    exactly 0.
    """
    t = np.asarray(th, dtype=float)
    if np.any(np.abs(t) > math.pi):
        raise ValueError("theta must lie in [-pi, pi]")
    x = 0.5 * (1.0 - np.cos(t))
    x = np.where(np.abs(t) == math.pi, 1.0, x)
    out = mode.normalization * (1.0 - x) ** mode.s * hyp_poly(mode.nu, mode.s, x)
    return float(out) if np.ndim(th) == 0 else out


def orthogonality(j: int, k: int, s: float) -> float:
    """``int Theta_j Theta_k |sin theta|^(1-2s)`` over one half-period.

    Both functions are even, so this is half the integral over
    ``(-pi, pi)``; with this convention the diagonal is 1.
    """
    if max(j, k) > 12:
        raise ValueError("orthogonality is checked for nu <= 12")
    mj, mk = ExtensionMode(j, s), ExtensionMode(k, s)
    cj, ck = _coefficients(j, s), _coefficients(k, s)
    P = np.polynomial.polynomial
    val = _weighted_integral(lambda x: P.polyval(x, cj) * P.polyval(x, ck), s)
    return 2.0 ** (1.0 - 2.0 * s) * mj.normalization * mk.normalization * val


def gram_matrix(s: float, nmax: int = 8) -> np.ndarray:
    G = np.empty((nmax + 1, nmax + 1))
    for j in range(nmax + 1):
        for k in range(j, nmax + 1):
            G[j, k] = G[k, j] = orthogonality(j, k, s)
    return G


def _q(mode: ExtensionMode, X, Y):
    r = np.hypot(X, Y)
    return r ** (mode.s + mode.nu) * theta(mode, np.arctan2(Y, X))


def extension_samples(count: int = 50, seed: int = 0, rmin: float = 0.5, rmax: float = 1.0, min_sin: float = 0.05) -> np.ndarray:
    """Random ``(r, theta)`` pairs with ``|sin theta| > min_sin``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        r = rng.uniform(rmin, rmax)
        t = rng.uniform(-math.pi, math.pi)
        if abs(math.sin(t)) > min_sin:
            out.append((r, t))
    return np.array(out)


def extension_residual(mode: ExtensionMode, sample=None, step: float = 1e-3) -> float:
    """Max over the sample of the central-difference residual of
    ``q_xx + q_yy + (1-2s) q_y / y`` (the weighted divergence divided by
    ``|y|^(1-2s)``) for ``q = r^(s+nu) Theta_nu``."""
    P = extension_samples() if sample is None else np.asarray(sample, dtype=float)
    r, t = P[:, 0], P[:, 1]
    if np.any(np.abs(np.sin(t)) <= 0.05 * (1 - 1e-12)):
        raise ValueError("sample points must keep |sin theta| > 0.05")
    X, Y = r * np.cos(t), r * np.sin(t)
    d = step
    q0 = _q(mode, X, Y)
    qxp, qxm = _q(mode, X + d, Y), _q(mode, X - d, Y)
    qyp, qym = _q(mode, X, Y + d), _q(mode, X, Y - d)
    lap = (qxp + qxm + qyp + qym - 4.0 * q0) / d**2
    drift = (1.0 - 2.0 * mode.s) * (qyp - qym) / (2.0 * d * Y)
    return float(np.max(np.abs(lap + drift)))


def neumann_trace(mode: ExtensionMode, x: float, y: float, step: float | None = None) -> float:
    """``y^(1-2s) dq/dy`` at ``(x, y)``, ``y > 0``, by a central difference."""
    if not y > 0:
        raise ValueError("y must be positive")
    d = 1e-3 * y if step is None else step
    dq = (_q(mode, np.array([x]), np.array([y + d])) - _q(mode, np.array([x]), np.array([y - d])))[0] / (2 * d)
    return float(y ** (1.0 - 2.0 * mode.s) * dq)


def ring_norm(coeffs, s: float, R: float) -> float:
    """Weighted ``L^2`` norm of ``sum a_nu r^(s+nu) Theta_nu`` over the upper
    half of the circle of radius ``R`` (weight ``|y|^(1-2s)``)."""
    a = np.asarray(coeffs, dtype=float)
    modes = [ExtensionMode(k, s) for k in range(a.size)]

    def integrand(x):
        t = np.arccos(1.0 - 2.0 * x)
        v = sum(ak * R ** (s + k) * theta(mk, t) for k, (ak, mk) in enumerate(zip(a, modes)))
        return v**2

    # dtheta * sin^(1-2s) = 2^(1-2s) x^(-s) (1-x)^s dx; |y|^(1-2s) ds = R^(2-2s) sin^(1-2s) dtheta
    return R ** (2.0 - 2.0 * s) * 2.0 ** (1.0 - 2.0 * s) * _weighted_integral(integrand, s, -s)
