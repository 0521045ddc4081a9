"""Kernels seen through a boundary-flattening change of variables.

For ``L u(x) = int (u(x+y) - u(x)) mu(y/|y|) |y|^(-n-2s) dy`` and a
diffeomorphism ``phi``, the pulled-back operator has kernel
``K(x, z) |z|^(-n-2s)`` with ``y = phi(x+z) - phi(x)``.  Near ``z = 0``
``K(x, r theta) = a1(x, theta) + r a2(x, theta) + O(r^(1+gamma))`` with
``a1`` even and ``a2`` odd in ``theta``.  Only ``n = 2`` is handled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .quadrature import gauss_legendre
from .spectral import SpectralMeasure

__all__ = [
    "Diffeo2D",
    "TransformedKernel",
    "identity_diffeo",
    "linear_diffeo",
    "parabola_diffeo",
    "transform_kernel",
    "Decomposition",
    "decompose",
    "odd_cancellation_check",
    "holder_in_x",
    "kernel_bounds",
]


@dataclass(frozen=True, eq=False)
class Diffeo2D:
    """Closed-form map ``phi`` with inverse, Jacobian and Hessian.

    ``hessian(x)`` returns ``(2, 2, 2)``: ``H[k]`` is the Hessian of ``phi_k``.
    ``gamma`` is the Hoelder exponent of the second derivatives.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    gamma: float = 1.0
    name: str = "custom"
    box: tuple = ((-1.0, -1.0), (1.0, 1.0))

    def check(self, pts) -> None:
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        det = np.array([np.linalg.det(self.jacobian(p)) for p in P])
        if np.any(np.abs(det) < 1e-12):
            raise ValueError("Jacobian is singular on the sample")


def identity_diffeo() -> Diffeo2D:
    return Diffeo2D(
        lambda x: np.asarray(x, dtype=float),
        lambda y: np.asarray(y, dtype=float),
        lambda x: np.eye(2),
        lambda x: np.zeros((2, 2, 2)),
        gamma=1.0,
        name="identity",
    )


def linear_diffeo(A) -> Diffeo2D:
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) < 1e-12:
        raise ValueError("linear map must be invertible")
    Ai = np.linalg.inv(A)
    return Diffeo2D(
        lambda x: np.asarray(x, dtype=float) @ A.T,
        lambda y: np.asarray(y, dtype=float) @ Ai.T,
        lambda x: A.copy(),
        lambda x: np.zeros((2, 2, 2)),
        gamma=1.0,
        name="linear",
    )


def parabola_diffeo(kappa: float = 0.5, c: float = 0.25, gamma: float = 0.5) -> Diffeo2D:
    """Flattens ``{x2 = g(x1)}``, ``g(t) = kappa t^2 + c |t|^(2+gamma)``:
    ``phi(x) = (x1, x2 - g(x1))``.  ``g''`` is exactly ``C^gamma`` at ``t = 0``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")

    def g(t):
        return kappa * t**2 + c * np.abs(t) ** (2.0 + gamma)

    def g1(t):
        return 2 * kappa * t + c * (2.0 + gamma) * np.abs(t) ** (1.0 + gamma) * np.sign(t)

    def g2(t):
        return 2 * kappa + c * (2.0 + gamma) * (1.0 + gamma) * np.abs(t) ** gamma

    def phi(x):
        x = np.asarray(x, dtype=float)
        out = x.copy()
        out[..., 1] = x[..., 1] - g(x[..., 0])
        return out

    def inv(y):
        y = np.asarray(y, dtype=float)
        out = y.copy()
        out[..., 1] = y[..., 1] + g(y[..., 0])
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        return np.array([[1.0, 0.0], [-g1(x[0]), 1.0]])

    def hess(x):
        x = np.asarray(x, dtype=float)
        H = np.zeros((2, 2, 2))
        H[1, 0, 0] = -g2(x[0])
        return H

    return Diffeo2D(phi, inv, jac, hess, gamma=gamma, name=f"parabola(kappa={kappa},c={c},gamma={gamma})")


@dataclass(frozen=True, eq=False)
class TransformedKernel:
    mu: SpectralMeasure
    diffeo: Diffeo2D
    s: float

    def __call__(self, x, z) -> np.ndarray:
        return transform_kernel(self.diffeo, self.mu, x, z, self.s)


def transform_kernel(d: Diffeo2D, mu: SpectralMeasure, x, z, s: float) -> np.ndarray | float:
    """``K(x, z) = mu(y/|y|) (|z|/|y|)^(n+2s) |det D phi(x+z)|``,
    ``y = phi(x+z) - phi(x)``.  ``z`` may be an ``(m, 2)`` array."""
    x = np.asarray(x, dtype=float).reshape(2)
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    rz = np.linalg.norm(Z, axis=-1)
    if np.any(rz == 0):
        raise ValueError("z = 0 is not an admissible offset")
    Y = d.phi(x + Z) - d.phi(x)
    ry = np.linalg.norm(Y, axis=-1)
    det = np.array([abs(np.linalg.det(d.jacobian(x + zz))) for zz in Z])
    K = mu(Y / ry[:, None]) * (rz / ry) ** (2.0 + 2.0 * s) * det
    return float(K[0]) if single else K


@dataclass
class Decomposition:
    a1: float
    a2: float
    slope: float
    radii: list
    remainders: list
    exact: bool = False
    monotone: bool = True
    note: str = ""

    def as_tuple(self):
        return self.a1, self.a2, self.slope


DEFAULT_RADII = tuple(0.05 * 2.0 ** -k for k in range(8))


def _exponents(gamma: float, count: int) -> list:
    """``0`` followed by the sorted values ``j + k gamma``, ``j >= 1``, ``k >= 0``."""
    vals = {0.0}
    for j in range(1, count + 1):
        for k in range(0, int(count / max(gamma, 1e-3)) + 2):
            vals.add(round(j + k * gamma, 12))
    return sorted(vals)[:count]


def decompose(k: TransformedKernel, x, theta, radii=DEFAULT_RADII) -> Decomposition:
    """Leading coefficients of ``K(x, r theta)`` as ``r -> 0``.

    Generalized Richardson extrapolation: ``K`` at the radii is fitted by
    ``sum_e c_e r^e`` with exponents ``0`` and ``j + k gamma`` (``j >= 1``),
    as many as there are radii; ``a1 = c_0`` and ``a2 = c_1``.  ``slope`` is
    the log-log slope of ``|K - a1 - r a2|`` over the radii.  A remainder
    that is not monotone in ``r`` is flagged.
    """
    r = np.sort(np.asarray(radii, dtype=float))[::-1]
    if r.size < 4:
        raise ValueError("decompose needs at least 4 radii")
    if not (r.min() > 1e-4 and r.max() < 0.5):
        raise ValueError("radii must lie in (1e-4, 0.5)")
    th = np.asarray(theta, dtype=float).reshape(2)
    th = th / np.linalg.norm(th)
    Kv = k(np.asarray(x, dtype=float), r[:, None] * th)
    if np.ptp(Kv) <= 1e-12 * float(np.max(np.abs(Kv))):
        # constant along the ray up to the roundoff of phi(x+z) - phi(x)
        # (identity or linear maps): no fit needed
        return Decomposition(float(np.mean(Kv)), 0.0, math.inf, r.tolist(), [0.0] * r.size, exact=True, note="kernel constant along the ray")
    expo = np.array(_exponents(k.diffeo.gamma, r.size))
    # columns in r / r_max keep the Vandermonde system well scaled
    V = (r / r[0])[:, None] ** expo[None, :]
    coef, *_ = np.linalg.lstsq(V, Kv, rcond=None)
    coef = coef / r[0] ** expo
    a1, a2 = float(coef[0]), float(coef[1])
    rem = np.abs(Kv - a1 - r * a2)
    scale = max(1.0, float(np.max(np.abs(Kv))))
    if np.all(rem <= 1e-12 * scale):
        return Decomposition(a1, a2, math.inf, r.tolist(), rem.tolist(), exact=True, note="remainder vanishes to roundoff")
    monotone = bool(np.all(np.diff(rem) <= 0))
    ok = rem > 0
    slope = float(np.polyfit(np.log(r[ok]), np.log(rem[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return Decomposition(a1, a2, slope, r.tolist(), rem.tolist(), False, monotone, "" if monotone else "non-monotone remainder")


def _finite_part(t: float, s: float) -> float:
    """``int_0^inf [(1 + r t)_+^(s-1) - 1_{r<1}] r^(-2s) dr``."""
    with warnings.catch_warnings():
        # QUADPACK reports roundoff once it has reached machine precision
        warnings.simplefilter("ignore", IntegrationWarning)
        return _finite_part_raw(t, s)


def _finite_part_raw(t: float, s: float) -> float:
    f = lambda r: ((1.0 + r * t) ** (s - 1.0) - 1.0) * r ** (-2.0 * s)
    g = lambda r: (1.0 + r * t) ** (s - 1.0) * r ** (-2.0 * s)
    kw = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
    if t >= 0:
        return quad(f, 0.0, 1.0, **kw)[0] + quad(g, 1.0, np.inf, **kw)[0]
    R = 1.0 / abs(t)
    # (1 - r|t|)^(s-1) = |t|^(s-1) (R - r)^(s-1): algebraic weight at r = R
    h = lambda r: abs(t) ** (s - 1.0) * r ** (-2.0 * s)
    if R <= 1.0:
        head = quad(lambda r: -(r ** (-2.0 * s)), R, 1.0, **kw)[0]
        return quad(lambda r: ((1.0 - r * abs(t)) ** (s - 1.0) - 1.0) * r ** (-2.0 * s), 0.0, R / 2, **kw)[0] + quad(
            h, R / 2, R, weight="alg", wvar=(0.0, s - 1.0), **kw
        )[0] - quad(lambda r: r ** (-2.0 * s), R / 2, R, **kw)[0] + head
    return quad(lambda r: ((1.0 - r * abs(t)) ** (s - 1.0) - 1.0) * r ** (-2.0 * s), 0.0, 1.0, **kw)[0] + quad(
        h, 1.0, R, weight="alg", wvar=(0.0, s - 1.0), **kw
    )[0]


def odd_cancellation_check(s: float, a2: Callable[[np.ndarray], np.ndarray], m: int = 64) -> float:
    """``PV int (x_n + y_n)_+^(s-1) a2(y/|y|) |y|^(1-n-2s) dy`` at ``x = e_n``, ``n = 2``.

    Polar factorization: each direction ``theta`` with ``theta_n > 0`` is
    paired with ``-theta``, so the radial integrals combine into
    ``a2(theta) I(theta_n) + a2(-theta) I(-theta_n)``.  ``I`` subtracts
    ``1_{r<1} r^(-2s)``, which integrates to zero against an odd ``a2`` and
    regularizes an even one (used as a control).
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    # theta_n = sin(phi) vanishes at both ends: split at pi/2 and grade toward the ends
    gx, gw = gauss_legendre(m)
    u = np.concatenate([gx, 1.0 + gx]) * (math.pi / 2)
    w = np.concatenate([gw, gw]) * (math.pi / 2)
    total = 0.0
    for phi, wt in zip(u, w):
        th = np.array([math.cos(phi), math.sin(phi)])
        t = th[1]
        vp = float(np.asarray(a2(th[None, :])).reshape(-1)[0])
        vm = float(np.asarray(a2(-th[None, :])).reshape(-1)[0])
        total += wt * (vp * _finite_part(t, s) + vm * _finite_part(-t, s))
    return total


def holder_in_x(k: TransformedKernel, theta, points) -> dict:
    """``|a1(x_i) - a1(x_j)| / |x_i - x_j|^gamma`` over all pairs of ``points``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.array([decompose(k, p, theta).a1 for p in P])
    g = k.diffeo.gamma
    ratios = []
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            dist = np.linalg.norm(P[i] - P[j])
            ratios.append(abs(a[i] - a[j]) / dist**g)
    return {"a1": a.tolist(), "constant": float(max(ratios)) if ratios else 0.0, "gamma": g}


def kernel_bounds(d: Diffeo2D, mu: SpectralMeasure, s: float, samples: int = 400, seed: int = 0) -> tuple[float, float]:
    """Sampled ``(lambda', Lambda')`` from the singular values and
    determinant of ``D phi`` over the working box."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(d.box[0]), np.asarray(d.box[1])
    P = lo + (hi - lo) * rng.random((samples, 2))
    sv = np.array([np.linalg.svd(d.jacobian(p), compute_uv=False) for p in P])
    det = np.abs(sv[:, 0] * sv[:, 1])
    smin, smax = float(sv[:, 1].min()), float(sv[:, 0].max())
    e = 2.0 + 2.0 * s
    return mu.lam * smax ** (-e) * float(det.min()), mu.Lam * smin ** (-e) * float(det.max())
