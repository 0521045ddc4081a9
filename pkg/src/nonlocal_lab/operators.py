"""Linear nonlocal operators, extremal operators and finite inf-sup families.

All operators act as

    L u(x) = (1 - s) int ((u(x+y) + u(x-y))/2 - u(x)) K(y) dy,

with ``K(y) = mu(y/|y|) |y|^(-n-2s)`` for the stable class and
``K(y) = b(y) |y|^(-n-2s)`` for the rough class.  In polar coordinates every
evaluation is a sphere-rule sum of one-sided line integrals
``I_theta = int_0^inf g_theta(r) r^(-1-2s) dr``; the directional
(one-dimensional fractional Laplacian) value is ``D_theta = 2 c_{1,s} I_theta``.

Every evaluation returns an :class:`~nonlocal_lab.quadrature.Estimate`
(value and error estimate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._parallel import pmap
from .core import Field, PowerProfile, as_point
from .frac1d import c1s
from .quadrature import Estimate, gauss_legendre, pv_line_integral, pv_line_parts
from .spectral import SpectralMeasure, SphereRule, canonical_angle, graded_sphere_rule, sphere_rule

__all__ = [
    "EllipticityBounds",
    "RoughDensity",
    "KernelSpec",
    "IsaacsOperator",
    "eval_linear",
    "eval_directional",
    "pucci_star",
    "pucci_rough",
    "pucci_all",
    "power_constants",
    "find_beta_roots",
    "isaacs_eval",
    "RootSearchFailure",
]


@dataclass(frozen=True)
class EllipticityBounds:
    lam: float
    Lam: float
    s: float

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ValueError("ellipticity bounds must satisfy 0 < lam <= Lam")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")


def _canonical(y: np.ndarray) -> np.ndarray:
    """Representative of {y, -y}, so even densities are even by construction."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] == 1:
        return np.abs(y)
    flip = (y[..., 1] < 0) | ((y[..., 1] == 0) & (y[..., 0] < 0))
    return np.where(flip[..., None], -y, y)


@dataclass(frozen=True, eq=False)
class RoughDensity:
    """Even bounded density ``b`` with ``lam <= b <= Lam``.

    Parameters
    ----------
    func : callable
        Vectorized ``b`` evaluated on canonical representatives of ``{y, -y}``.
    radial_jumps : tuple
        Radii where ``b`` may jump along every ray (used as panel edges).
    outer_radius : float
        Beyond this radius ``b(y)`` depends only on the direction of ``y``.
    angular : SpectralMeasure, optional
        When given, ``b(y) = angular(y/|y|)`` everywhere (a stable kernel
        viewed inside the rough class).
    """

    func: Callable[[np.ndarray], np.ndarray]
    lam: float
    Lam: float
    dim: int = 2
    radial_jumps: tuple = ()
    outer_radius: float = 0.0
    angular: SpectralMeasure | None = None

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ValueError("density bounds must satisfy 0 < lam <= Lam")
        rng = np.random.default_rng(0)
        Y = rng.normal(size=(512, self.dim)) * rng.uniform(0.01, 3.0, size=(512, 1))
        v = self(Y)
        if np.any(v < self.lam - 1e-12) or np.any(v > self.Lam + 1e-12):
            raise ValueError("density violates lam <= b <= Lam at sampled points")

    def __call__(self, Y) -> np.ndarray:
        return np.asarray(self.func(_canonical(Y)), dtype=float)

    @classmethod
    def constant(cls, value: float, dim: int = 2) -> "RoughDensity":
        return cls(lambda Y: np.full(Y.shape[:-1], float(value)), value, value, dim)

    @classmethod
    def ball_indicator(cls, lam: float, Lam: float, radius: float = 0.5, dim: int = 2) -> "RoughDensity":
        """``lam + (Lam - lam) * indicator(|y| < radius)``."""

        def f(Y):
            return np.where(np.linalg.norm(Y, axis=-1) < radius, Lam, lam)

        return cls(f, lam, Lam, dim, (radius,), radius)

    @classmethod
    def from_measure(cls, mu: SpectralMeasure) -> "RoughDensity":
        def f(Y):
            nrm = np.linalg.norm(Y, axis=-1, keepdims=True)
            return mu(Y / np.where(nrm > 0, nrm, 1.0))

        return cls(f, mu.lam, mu.Lam, mu.dim, (), 0.0, mu)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel of the stable class (``cls='star'``, measure ``mu``) or the
    rough class (``cls='rough'``, density ``b``)."""

    cls: str
    s: float
    mu: SpectralMeasure | None = None
    b: RoughDensity | None = None

    def __post_init__(self):
        if self.cls not in ("star", "rough"):
            raise ValueError(f"unknown kernel class {self.cls!r}")
        if not 0 < self.s < 1:
            raise ValueError("kernel order s must lie in (0, 1)")
        if self.cls == "star" and self.mu is None:
            raise ValueError("star kernels need a spectral measure")
        if self.cls == "rough" and self.b is None:
            raise ValueError("rough kernels need a density")

    @property
    def n(self) -> int:
        return self.mu.dim if self.cls == "star" else self.b.dim  # type: ignore[union-attr]

    @property
    def angular(self) -> SpectralMeasure | None:
        """Angular profile when the kernel is homogeneous, else ``None``."""
        if self.cls == "star":
            return self.mu
        return self.b.angular  # type: ignore[union-attr]


def _check(u: Field, x, s: float) -> np.ndarray:
    x = as_point(x, u.n)
    if not u.growth() < 2 * s:
        raise ValueError(f"field grows like |x|^{u.growth()}, not integrable against order {s}")
    return x


def _default_rule(n: int, rule: SphereRule | None) -> SphereRule:
    if n == 1:
        return sphere_rule(1)
    return sphere_rule(2, 128) if rule is None else rule


def _line_values(u: Field, x, s, rule: SphereRule, modulation=None):
    """One-sided line integrals I_theta on the first half of the rule."""
    k = rule.half
    out = []
    for th in rule.nodes[:k]:
        data = u.line_data(x, th)
        line = u.restrict(x, th)
        kw = {}
        if modulation is not None:
            mod, jumps, far = modulation(th)
            kw = dict(modulation=mod, modulation_far=far)
            kinks = tuple(data.kinks) + tuple(jumps)
        else:
            kinks = data.kinks
        out.append(pv_line_integral(line, s, breaks=data.breaks, kinks=kinks, scale=data.scale, tail=data.tail, **kw))
    return out


def _line_parts(u: Field, x, s, rule: SphereRule):
    k = rule.half
    P, N = [], []
    for th in rule.nodes[:k]:
        data = u.line_data(x, th)
        p, q = pv_line_parts(u.restrict(x, th), s, breaks=data.breaks, kinks=data.kinks, scale=data.scale, tail=data.tail)
        P.append(p)
        N.append(q)
    return P, N


def _sphere_sum(rule: SphereRule, vals: np.ndarray, errs: np.ndarray) -> Estimate:
    est = rule.integrate_even(vals)
    qerr = 2.0 * float(np.dot(rule.weights[: rule.half], errs))
    return Estimate(est.value, est.error + qerr)


def _rough_modulation(b: RoughDensity):
    def modulation(th):
        def mod(r):
            return b(np.asarray(r)[..., None] * th)

        far_r = 2.0 * max(b.outer_radius, 1.0)
        far = float(b(far_r * th[None, :])[0])
        return mod, b.radial_jumps, far

    return modulation


# ---------------------------------------------------------------- linear operators


def eval_linear(L: KernelSpec, u: Field, x, *, route: str = "auto", rule: SphereRule | None = None) -> Estimate:
    """PV value of ``L u(x)``.

    Parameters
    ----------
    route : {"auto", "polar", "volumetric"}
        ``polar`` integrates line by line over a sphere rule.  ``volumetric``
        integrates over nested dyadic square frames in Cartesian
        coordinates, with a Hessian (Taylor) core and a closed-form exterior;
        it needs a homogeneous kernel and a field that is constant outside a
        ball.  ``auto`` picks ``volumetric`` when it applies.
    """
    x = _check(u, x, L.s)
    if route not in ("auto", "polar", "volumetric"):
        raise ValueError(f"unknown route {route!r}")
    vol_ok = L.angular is not None and u.support() is not None
    if route == "volumetric" and not vol_ok:
        raise ValueError("volumetric route needs a homogeneous kernel and a compactly described field")
    if route == "volumetric" or (route == "auto" and vol_ok):
        return _volumetric(L, u, x)
    rule = _default_rule(u.n, rule)
    if L.cls == "star":
        I = _line_values(u, x, L.s, rule)
        w = L.mu(rule.nodes[: rule.half])  # type: ignore[misc]
    else:
        I = _line_values(u, x, L.s, rule, _rough_modulation(L.b))  # type: ignore[arg-type]
        w = np.ones(rule.half)
    vals = np.array([e.value for e in I]) * w
    errs = np.array([e.error for e in I]) * w
    return _sphere_sum(rule, vals, errs).scaled(1.0 - L.s)


def eval_directional(L: KernelSpec, u: Field, x, *, rule: SphereRule | None = None) -> Estimate:
    """Weighted sum of one-dimensional fractional Laplacians along directions.

    ``L u(x) = -(1-s)/(2 c_{1,s}) sum_i w_i mu(theta_i) (-Delta)^s_theta u(x)``
    where ``(-Delta)^s_theta`` acts on ``t -> u(x + t theta)``.
    """
    if L.cls != "star":
        raise ValueError("the directional representation needs a star kernel")
    x = _check(u, x, L.s)
    rule = _default_rule(u.n, rule)
    c = c1s(L.s)
    I = _line_values(u, x, L.s, rule)
    frac = np.array([-2.0 * c * e.value for e in I])  # (-Delta)^s along theta
    ferr = np.array([2.0 * c * e.error for e in I])
    mu = L.mu(rule.nodes[: rule.half])  # type: ignore[misc]
    return _sphere_sum(rule, mu * frac, mu * ferr).scaled(-(1.0 - L.s) / (2.0 * c))


# ---------------------------------------------------------------- extremal operators


@dataclass(frozen=True)
class PucciValues:
    """The four extremal values at one point (stable and rough classes)."""

    star_plus: Estimate
    star_minus: Estimate
    rough_plus: Estimate
    rough_minus: Estimate


def pucci_all(u: Field, x, bounds: EllipticityBounds, rule: SphereRule | None = None) -> PucciValues:
    """``M^-_{L0} <= M^- <= M^+ <= M^+_{L0}`` from one shared set of line integrals.

    Per direction the positive and negative parts ``P``, ``N`` of the
    second-difference integral are computed on one panel layout; the stable
    class uses ``Lam (P-N)^+ - lam (P-N)^-`` and the rough class uses
    ``Lam P - lam N``, so the ordering holds direction by direction.
    """
    x = _check(u, x, bounds.s)
    rule = _default_rule(u.n, rule)
    P, N = _line_parts(u, x, bounds.s, rule)
    p = np.array([e.value for e in P])
    q = np.array([e.value for e in N])
    err = np.array([e.error for e in P]) + np.array([e.error for e in N])
    I = p - q
    lam, Lam = bounds.lam, bounds.Lam
    k = 1.0 - bounds.s

    def out(v, e):
        return _sphere_sum(rule, v, e).scaled(k)

    return PucciValues(
        star_plus=out(Lam * np.maximum(I, 0) - lam * np.maximum(-I, 0), Lam * err),
        star_minus=out(lam * np.maximum(I, 0) - Lam * np.maximum(-I, 0), Lam * err),
        rough_plus=out(Lam * p - lam * q, Lam * err),
        rough_minus=out(lam * p - Lam * q, Lam * err),
    )


def pucci_star(u: Field, x, bounds: EllipticityBounds, sign: str = "+", rule: SphereRule | None = None) -> Estimate:
    """Extremal operator over the stable class, exact at the sphere-rule level."""
    x = _check(u, x, bounds.s)
    rule = _default_rule(u.n, rule)
    I = _line_values(u, x, bounds.s, rule)
    v = np.array([e.value for e in I])
    e = np.array([e.error for e in I])
    hi, lo = (bounds.Lam, bounds.lam) if sign == "+" else (bounds.lam, bounds.Lam)
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    vals = hi * np.maximum(v, 0) - lo * np.maximum(-v, 0)
    return _sphere_sum(rule, vals, bounds.Lam * e).scaled(1.0 - bounds.s)


def pucci_rough(u: Field, x, bounds: EllipticityBounds, sign: str = "+", rule: SphereRule | None = None) -> Estimate:
    """Extremal operator over the rough class (pointwise choice of ``b``)."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    pv = pucci_all(u, x, bounds, rule)
    return pv.rough_plus if sign == "+" else pv.rough_minus


def _power_rule(n: int) -> SphereRule:
    return sphere_rule(1) if n == 1 else graded_sphere_rule(points=8, levels=10)


def power_constants_estimate(
    s: float, beta: float, bounds: EllipticityBounds, cls: str = "star", n: int = 2, rule: SphereRule | None = None
) -> tuple[Estimate, Estimate]:
    if not 0 < beta < 2 * s:
        raise ValueError(f"beta must lie in (0, 2s) = (0, {2 * s})")
    if cls not in ("star", "rough"):
        raise ValueError(f"unknown class {cls!r}")
    if abs(bounds.s - s) > 0:
        bounds = EllipticityBounds(bounds.lam, bounds.Lam, s)
    e = np.zeros(n)
    e[-1] = 1.0
    u = PowerProfile(tuple(e), beta)
    pv = pucci_all(u, e, bounds, rule or _power_rule(n))
    if cls == "star":
        return pv.star_plus, pv.star_minus
    return pv.rough_plus, pv.rough_minus


def power_constants(
    s: float, beta: float, bounds: EllipticityBounds, cls: str = "star", n: int = 2, rule: SphereRule | None = None
) -> tuple[float, float]:
    """``(c_bar, c_under)``: extremal operators of ``(x_n)_+^beta`` at ``e_n``.

    By homogeneity ``M^{+-} (x_n)_+^beta (x) = c x_n^(beta - 2s)``, so these
    are the constants of the power profile.
    """
    hi, lo = power_constants_estimate(s, beta, bounds, cls, n, rule)
    return hi.value, lo.value


class RootSearchFailure(RuntimeError):
    """No sign change of a power constant was found on (0, 2s)."""


def find_beta_roots(
    s: float, bounds: EllipticityBounds, cls: str = "star", *, tol: float = 1e-4, n: int = 2
) -> tuple[float, float]:
    """Bisection roots ``beta_1`` of ``c_bar`` and ``beta_2`` of ``c_under`` on (0, 2s)."""
    edge = min(0.05, 0.25 * s)
    lo0, hi0 = edge, 2 * s - edge
    rule = _power_rule(n)

    def consts(beta):
        return power_constants(s, beta, bounds, cls, n, rule)

    c_lo, c_hi = consts(lo0), consts(hi0)
    roots = []
    for idx, name in ((0, "c_bar"), (1, "c_under")):
        a, b = lo0, hi0
        fa, fb = c_lo[idx], c_hi[idx]
        if not (fa < 0 < fb):
            raise RootSearchFailure(f"{name} has no sign change on [{a}, {b}]: values {fa}, {fb}")
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = consts(m)[idx]
            if fm == 0.0:
                a = b = m
                break
            if fm < 0:
                a = m
            else:
                b = m
        roots.append(0.5 * (a + b))
    return roots[0], roots[1]


# ---------------------------------------------------------------- Isaacs families


@dataclass(frozen=True, eq=False)
class IsaacsOperator:
    """``inf_b sup_a (L_ab u + c_ab)`` over finite index sets.

    ``kernels[(a, b)]`` is a :class:`KernelSpec`; ``costs[(a, b)]`` is a
    number or a callable of the point (a scalar field).
    """

    A: tuple
    B: tuple
    kernels: dict
    costs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.A or not self.B:
            raise ValueError("index sets must be nonempty")
        s_vals = set()
        for a in self.A:
            for b in self.B:
                if (a, b) not in self.kernels:
                    raise ValueError(f"missing kernel for pair {(a, b)}")
                s_vals.add(self.kernels[(a, b)].s)
        if len(s_vals) != 1:
            raise ValueError("all kernels must share the same order s")

    @property
    def s(self) -> float:
        return next(iter(self.kernels.values())).s

    def cost(self, a, b, x) -> float:
        c = self.costs.get((a, b), 0.0)
        v = c(x) if callable(c) else c
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("cost values must be finite")
        return v

    @classmethod
    def single(cls, L: KernelSpec, cost=0.0) -> "IsaacsOperator":
        return cls((0,), (0,), {(0, 0): L}, {(0, 0): cost})

    @classmethod
    def bellman(cls, kernels: Sequence[KernelSpec], costs: Sequence = ()) -> "IsaacsOperator":
        """``sup_a (L_a u + c_a)``: a family with a single ``b`` index."""
        costs = list(costs) or [0.0] * len(kernels)
        A = tuple(range(len(kernels)))
        return cls(A, (0,), {(a, 0): k for a, k in zip(A, kernels)}, {(a, 0): c for a, c in zip(A, costs)})


def isaacs_eval(I: IsaacsOperator, u: Field, x, *, route: str = "polar", return_policy: bool = False):
    """Exact finite ``inf_b sup_a`` of ``L_ab u(x) + c_ab(x)``; ties go to the lowest index."""
    x = as_point(x, u.n)
    best_b = None
    best = None
    for b in I.B:
        top = None
        top_a = None
        for a in I.A:
            est = eval_linear(I.kernels[(a, b)], u, x, route=route)
            v = Estimate(est.value + I.cost(a, b, x), est.error)
            if top is None or v.value > top.value:
                top, top_a = v, a
        if best is None or top.value < best.value:  # type: ignore[union-attr]
            best, best_b, best_a = top, b, top_a
    if return_policy:
        return best, (best_a, best_b)
    return best


# ---------------------------------------------------------------- volumetric route


def _angular_integral(mu: SpectralMeasure, f: Callable[[np.ndarray], np.ndarray], m: int = 16) -> float:
    """``int_S mu(theta) f(theta) d theta`` for f smooth between multiples of pi/4."""
    if mu.dim == 1:
        th = np.array([[1.0], [-1.0]])
        return float(np.sum(mu(th) * f(th)))
    edges = set(np.pi / 4 * np.arange(9))
    for a in mu.kink_angles():
        edges.update({a, a + np.pi})
    e = np.array(sorted(edges))
    gx, gw = gauss_legendre(m)
    t = (e[:-1, None] + np.diff(e)[:, None] * gx).ravel()
    w = (np.diff(e)[:, None] * gw).ravel()
    th = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return float(np.sum(w * mu(th) * f(th)))


def _hessian(u: Field, x: np.ndarray, eps: float) -> np.ndarray:
    n = x.size
    H = np.zeros((n, n))
    E = np.eye(n) * eps
    u0 = float(u(x[None, :])[0])
    for i in range(n):
        up = float(u((x + E[i])[None, :])[0])
        um = float(u((x - E[i])[None, :])[0])
        H[i, i] = (up - 2 * u0 + um) / eps**2
        for j in range(i + 1, n):
            pts = np.stack([x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]])
            v = u(pts)
            H[i, j] = H[j, i] = (v[0] - v[1] - v[2] + v[3]) / (4 * eps**2)
    return H


def _frame_cells(n: int, rho: float, hcap: float):
    """Lower corners and side of cells tiling the frame ``rho <= |y|_inf <= 2 rho``."""
    k = max(1, int(math.ceil(rho / hcap)))
    side = rho / k
    if n == 1:
        base = rho + side * np.arange(k)
        return base[:, None], side
    m = 4 * k
    idx = np.arange(m)
    I, J = np.meshgrid(idx, idx, indexing="ij")
    lo = -2 * rho + side * np.stack([I.ravel(), J.ravel()], axis=-1)
    inner = np.all((lo >= -rho - 1e-12 * rho) & (lo + side <= rho + 1e-12 * rho), axis=-1)
    return lo[~inner], side


def _frame_integral(u, x, u0, s, mu, rho, hcap, m) -> float:
    gx, gw = gauss_legendre(m)
    lo, side = _frame_cells(x.size, rho, hcap)
    n = x.size
    if n == 1:
        Y = (lo + side * gx[None, :])[..., None]  # (cells, m, 1)
        W = side * gw[None, :]
    else:
        tx, ty = np.meshgrid(gx, gx, indexing="ij")
        off = np.stack([tx.ravel(), ty.ravel()], axis=-1) * side
        Y = lo[:, None, :] + off[None, :, :]
        W = (side * side) * np.outer(gw, gw).ravel()[None, :]
    r = np.linalg.norm(Y, axis=-1)
    th = Y / r[..., None]
    g = 0.5 * (u(x + Y) + u(x - Y)) - u0
    K = mu(th) * r ** (-n - 2 * s)
    total = float(np.sum(W * g * K))
    return total if n > 1 else 2.0 * total


def _volumetric(L: KernelSpec, u: Field, x: np.ndarray) -> Estimate:
    s = L.s
    mu = L.angular
    n = x.size
    c, R_u, far_val = u.support()  # type: ignore[misc]
    scale = min(u.smooth_scale(), 1.0)
    u0 = float(u(x[None, :])[0])
    R_need = float(np.linalg.norm(x - c)) + R_u
    rho_c = 1e-3 * scale
    frames = []
    rho = rho_c
    while rho < R_need:
        frames.append(rho)
        rho *= 2.0
    R_out = rho
    # Taylor core: (1/2) y^T H y integrated against the kernel over |y|_inf < rho_c
    eps = 1e-4 * scale
    H = _hessian(u, x, eps)
    # truncation from the step-doubled Hessian plus cancellation roundoff
    dH = np.abs(H - _hessian(u, x, 2 * eps)) / 3 + 8 * np.finfo(float).eps * (abs(u0) + 1e-300) / eps**2
    if n == 1:
        m2 = 2.0 * float(mu(np.array([[1.0]]))[0]) * rho_c ** (2 - 2 * s) / (2 - 2 * s)
        core, core_err = 0.5 * H[0, 0] * m2, 0.5 * dH[0, 0] * m2
        ext = 2.0 * float(mu(np.array([[1.0]]))[0]) * (far_val - u0) * R_out ** (-2 * s) / (2 * s)
    else:

        def moment(i, j):
            return _angular_integral(
                mu, lambda th: th[:, i] * th[:, j] * (rho_c / np.max(np.abs(th), axis=-1)) ** (2 - 2 * s) / (2 - 2 * s)
            )

        M = np.array([[moment(i, j) for j in range(n)] for i in range(n)])
        core = 0.5 * float(np.sum(H * M))
        core_err = 0.5 * float(np.sum(dH * np.abs(M)))
        ext = (far_val - u0) * _angular_integral(mu, lambda th: (np.max(np.abs(th), axis=-1) / R_out) ** (2 * s) / (2 * s))
    fine = sum(_frame_integral(u, x, u0, s, mu, r, scale, 12) for r in frames)
    crude = sum(_frame_integral(u, x, u0, s, mu, r, scale, 8) for r in frames)
    val = (1.0 - s) * (core + fine + ext)
    # the neglected quartic Taylor term is O((rho_c / scale)^2) = 1e-6 of the core
    return Estimate(float(val), float((1.0 - s) * (abs(fine - crude) + core_err + 1e-6 * abs(core))))


def eval_many(fn: Callable, points: Sequence, workers: int | None = None) -> list:
    """Evaluate ``fn(point)`` over a batch, optionally in parallel."""
    return pmap(fn, points, workers)
