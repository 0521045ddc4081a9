"""Grids, domains, fields and weighted-integrability bookkeeping.

A *field* is anything the operators can act on.  Besides point evaluation
every field describes its restriction to a line ``x + r*theta``: where that
restriction is singular (``breaks``), where it is merely piecewise smooth
(``kinks``), its smoothness scale, and how it behaves for large ``|r|``.
That description drives the panel layout of the line quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline, make_interp_spline
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .quadrature import Estimate, LineTail, gauss_legendre

__all__ = [
    "Estimate",
    "Domain",
    "Grid",
    "FarFieldModel",
    "GridFunction",
    "PowerProfile",
    "GaussianBump",
    "ConstantField",
    "RadialField",
    "FieldSum",
    "LineData",
    "eval_profile",
    "distance_function",
    "weighted_l1_norm",
    "as_point",
]

# Gaussian bumps are treated as exactly zero beyond this many widths
_GAUSS_CUT = 12.0


def as_point(x, n: int | None = None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and p.shape != (n,):
        raise ValueError(f"expected a point in dimension {n}, got shape {p.shape}")
    return p


@dataclass(frozen=True)
class LineData:
    """Line-restriction metadata consumed by the PV line quadrature."""

    breaks: tuple = ()
    kinks: tuple = ()
    scale: float = math.inf
    tail: LineTail = LineTail()


class Field:
    """Base class for scalar fields on R^n."""

    n: int = 1

    def __call__(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def line_data(self, x: np.ndarray, theta: np.ndarray) -> LineData:
        raise NotImplementedError

    def growth(self) -> float:
        """Exponent beta with |u(x)| = O(|x|^beta) at infinity."""
        return 0.0

    def support(self):
        """``(center, radius, value)`` if the field equals ``value`` outside the
        ball ``B(center, radius)``, else ``None``."""
        return None

    def smooth_scale(self) -> float:
        """Length over which the field is smooth (inf when unknown)."""
        return math.inf

    def restrict(self, x, theta) -> Callable[[np.ndarray], np.ndarray]:
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)

        def line(r):
            r = np.asarray(r, dtype=float)
            return self(x + r[..., None] * theta)

        return line

    def __add__(self, other: "Field") -> "FieldSum":
        return FieldSum((self, other), (1.0, 1.0))

    def __sub__(self, other: "Field") -> "FieldSum":
        return FieldSum((self, other), (1.0, -1.0))

    def __rmul__(self, c: float) -> "FieldSum":
        return FieldSum((self,), (float(c),))


# ---------------------------------------------------------------- domains


@dataclass(frozen=True)
class Domain:
    """Bounded region with a distance function.

    ``kind`` is one of ``interval``, ``box``, ``ball``,
    ``half_space_truncation``.  For the half-space truncation the domain is
    ``{x_n > 0}`` intersected with the box ``center +- halfwidths`` (the box
    spans ``x_n`` in ``(0, 2*halfwidths[-1])`` when ``center[-1]`` equals
    ``halfwidths[-1]``) and the distance is measured to the flat part
    ``{x_n = 0}`` only.
    """

    kind: str
    center: tuple
    radius: tuple
    boundary_band: float | None = None
    window: float | None = None

    def __post_init__(self):
        if self.kind not in ("interval", "box", "ball", "half_space_truncation"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        r = np.atleast_1d(np.asarray(self.radius, dtype=float))
        if r.size == 1:
            r = np.full(len(c), float(r[0]))
        if r.size != len(c):
            raise ValueError("radius/halfwidths do not match the center dimension")
        if np.any(r <= 0):
            raise ValueError("radius must be positive")
        if self.kind == "interval" and len(c) != 1:
            raise ValueError("interval domains are one-dimensional")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", tuple(float(v) for v in r))
        band = self.boundary_band
        if band is None:
            band = min(r) / 4.0
        if not 0 < band < min(r):
            raise ValueError("boundary_band must lie in (0, radius)")
        object.__setattr__(self, "boundary_band", float(band))
        if self.kind == "half_space_truncation":
            lo, hi = self.bounds
            if lo[-1] > 0.0:
                raise ValueError("truncation box must reach the hyperplane x_n = 0")
            win = self.window if self.window is not None else 0.5 * min(r)
            if not 0 < win < min(r):
                raise ValueError("analysis window must lie strictly inside the truncation box")
            object.__setattr__(self, "window", float(win))

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        r = np.asarray(self.radius)
        return c - r, c + r

    def exact_distance(self, X) -> np.ndarray:
        """Signed distance to the boundary (positive inside)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.n > 1:
            X = X[None, :]
        X = X.reshape(-1, self.n) if X.ndim != 1 else X[:, None]
        c = np.asarray(self.center)
        r = np.asarray(self.radius)
        if self.kind in ("interval", "ball"):
            return r[0] - np.linalg.norm(X - c, axis=-1)
        if self.kind == "box":
            return np.min(r - np.abs(X - c), axis=-1)
        inside_box = np.min(r - np.abs(X - c), axis=-1)
        return np.where(inside_box > 0, X[:, -1], np.minimum(X[:, -1], inside_box))

    def contains(self, X) -> np.ndarray:
        return self.exact_distance(X) > 0


def _blend(t: np.ndarray, band: float) -> np.ndarray:
    """C^2 increasing map equal to t on [0, band] and constant beyond 2*band."""
    u = np.clip((t - band) / band, 0.0, None)
    uc = np.minimum(u, 1.0)
    P = uc**6 - 3.0 * uc**5 + 2.5 * uc**4 + np.maximum(u - 1.0, 0.0)
    return np.where(t <= band, t, t - band * P)


def distance_function(d: Domain, x) -> np.ndarray | float:
    """Distance to the complement, smoothly extended into the interior.

    Inside ``boundary_band`` the value is the exact distance; deeper inside it
    is continued by a C^2 increasing blend that becomes constant.  Outside the
    domain the value is 0.  Half-space truncations use ``x_n`` unmodified.
    """
    X = np.asarray(x, dtype=float)
    scalar = X.ndim == 0 or (X.ndim == 1 and d.n > 1)
    t = d.exact_distance(X)
    if d.kind == "half_space_truncation":
        out = np.where(t > 0, t, 0.0)
    else:
        out = np.where(t > 0, _blend(np.maximum(t, 0.0), d.boundary_band), 0.0)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid over a box with identical spacing per axis."""

    lo: tuple
    hi: tuple
    h: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        counts = []
        for a, b in zip(lo, hi):
            m = (b - a) / self.h
            k = int(round(m))
            if abs(m - k) > 1e-9 * max(1.0, m):
                raise ValueError("box corners must be grid nodes (length not a multiple of h)")
            if k + 1 < 8:
                raise ValueError("at least 8 nodes per axis are required")
            counts.append(k + 1)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "_counts", tuple(counts))

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return self._counts  # type: ignore[attr-defined]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        out = []
        for a, b, m in zip(self.lo, self.hi, self.shape):
            ax = a + self.h * np.arange(m)
            ax[-1] = b
            out.append(ax)
        return out

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)`` in C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------- far fields


@dataclass(frozen=True)
class FarFieldModel:
    """Values of a grid function outside its grid box.

    ``zero``: identically 0.  ``bounded_constant``: the constant ``value``.
    ``power_profile``: ``coefficient * (x . direction)_+^beta``.
    """

    kind: str = "zero"
    value: float = 0.0
    direction: tuple = (1.0,)
    beta: float = 0.0
    coefficient: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "bounded_constant", "power_profile"):
            raise ValueError(f"unknown far-field kind {self.kind!r}")
        if self.kind == "power_profile":
            nu = np.atleast_1d(np.asarray(self.direction, dtype=float))
            if abs(np.linalg.norm(nu) - 1.0) > 1e-14:
                raise ValueError("far-field direction must be a unit vector")
            if not self.beta > 0:
                raise ValueError("power far-field exponent must be positive")
            object.__setattr__(self, "direction", tuple(nu))

    def growth(self) -> float:
        return self.beta if self.kind == "power_profile" else 0.0

    def check_admissible(self, s: float) -> None:
        if self.kind == "power_profile" and not self.beta < 2.0 * s:
            raise ValueError(f"far-field exponent {self.beta} is not below 2s = {2 * s}")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "zero":
            return np.zeros(X.shape[:-1])
        if self.kind == "bounded_constant":
            return np.full(X.shape[:-1], self.value)
        t = X @ np.asarray(self.direction)
        return self.coefficient * np.maximum(t, 0.0) ** self.beta


# ---------------------------------------------------------------- analytic fields


def _validate_direction(nu) -> np.ndarray:
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if abs(np.linalg.norm(nu) - 1.0) > 1e-14:
        raise ValueError("direction must be a unit vector within 1e-14")
    return nu


def _power_line(x, theta, nu, beta, offset=0.0):
    """Line data of (y . nu - offset)_+^beta along x + r theta."""
    a = float(np.dot(x, nu)) - offset
    b = float(np.dot(theta, nu))
    if b == 0.0:
        return (), LineTail("constant", 0.0, max(a, 0.0) ** beta)
    brk = (abs(a / b),) if a != 0.0 else ()
    return brk, LineTail("power", 0.0, 0.0, beta)


@dataclass(frozen=True, eq=False)
class PowerProfile(Field):
    """The one-dimensional power ``(x . nu)_+^beta`` seen as a field on R^n."""

    direction: tuple
    beta: float
    coefficient: float = 1.0

    def __post_init__(self):
        nu = _validate_direction(self.direction)
        if not self.beta > 0:
            raise ValueError("exponent must be positive")
        object.__setattr__(self, "direction", tuple(nu))

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.direction)

    def growth(self) -> float:
        return self.beta

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        t = X @ np.asarray(self.direction)
        return self.coefficient * np.where(t > 0, np.abs(t) ** self.beta, 0.0)

    def line_data(self, x, theta) -> LineData:
        brk, tail = _power_line(x, theta, np.asarray(self.direction), self.beta)
        if tail.kind == "constant":
            tail = LineTail("constant", 0.0, self.coefficient * tail.value)
        return LineData(breaks=brk, tail=tail)


def eval_profile(p: PowerProfile, x) -> float:
    """Exact value of ``(x . nu)_+^beta`` (0 on the closed negative side)."""
    x = as_point(x, p.n)
    t = float(np.dot(x, p.direction))
    return p.coefficient * t**p.beta if t > 0 else 0.0


@dataclass(frozen=True, eq=False)
class ConstantField(Field):
    value: float
    dim: int = 1

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.dim

    def __call__(self, X):
        return np.full(np.asarray(X).shape[:-1], float(self.value))

    def support(self):
        return np.zeros(self.dim), 0.0, float(self.value)

    def line_data(self, x, theta) -> LineData:
        return LineData(tail=LineTail("constant", 0.0, float(self.value)))


@dataclass(frozen=True, eq=False)
class GaussianBump(Field):
    """``amplitude * exp(-|x - center|^2 / (2 sigma^2))``, cut off at 12 sigma."""

    center: tuple
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.center)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        d2 = np.sum((X - np.asarray(self.center)) ** 2, axis=-1)
        return np.where(d2 < (_GAUSS_CUT * self.sigma) ** 2, self.amplitude * np.exp(-0.5 * d2 / self.sigma**2), 0.0)

    def support(self):
        return np.asarray(self.center), _GAUSS_CUT * self.sigma, 0.0

    def smooth_scale(self) -> float:
        return self.sigma

    def line_data(self, x, theta) -> LineData:
        R = float(np.linalg.norm(np.asarray(x) - np.asarray(self.center))) + _GAUSS_CUT * self.sigma
        return LineData(scale=self.sigma, tail=LineTail("zero", R))


@dataclass(frozen=True, eq=False)
class RadialField(Field):
    """Radial field ``profile(|x - center|)``.

    Parameters
    ----------
    profile : callable
        Vectorized function of the radius.
    singular_radii : tuple
        Radii where the profile is not smooth.
    tail : LineTail
        Behaviour beyond ``tail.radius``: zero, constant, or power growth.
    scale : float
        Smoothness scale of the profile away from its singular radii.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    dim: int
    singular_radii: tuple = ()
    tail: LineTail = LineTail()
    scale: float = math.inf
    center: tuple | None = None

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.dim

    def growth(self) -> float:
        return self.tail.beta if self.tail.kind == "power" else 0.0

    def _c(self):
        return np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=float)

    def support(self):
        t = self.tail
        if t.kind == "power":
            return None
        return self._c(), t.radius, t.value if t.kind == "constant" else 0.0

    def smooth_scale(self) -> float:
        return self.scale

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return self.profile(np.linalg.norm(X - self._c(), axis=-1))

    def line_data(self, x, theta) -> LineData:
        y = np.asarray(x, dtype=float) - self._c()
        p = float(np.dot(y, theta))
        q = float(np.dot(y, y))
        brk = [abs(p)]
        for rho in self.singular_radii:
            disc = p * p - q + rho * rho
            if disc >= 0:
                sq = math.sqrt(disc)
                brk.extend([abs(-p + sq), abs(-p - sq)])
        t = self.tail
        R = t.radius + math.sqrt(q)
        floor = 1e-9 * max(math.sqrt(q), 1.0)
        return LineData(breaks=tuple(b for b in brk if b > floor), scale=self.scale, tail=LineTail(t.kind, R, t.value, t.beta))


def _merge_tails(tails: Sequence[LineTail], coeffs: Sequence[float]) -> LineTail:
    R = max(t.radius for t in tails)
    if any(t.kind == "power" for t in tails):
        return LineTail("power", R, 0.0, max(t.beta for t in tails if t.kind == "power"))
    val = sum(c * t.value for t, c in zip(tails, coeffs) if t.kind == "constant")
    if any(t.kind == "constant" for t in tails):
        return LineTail("constant", R, val)
    return LineTail("zero", R)


@dataclass(frozen=True, eq=False)
class FieldSum(Field):
    """Linear combination of fields."""

    fields: tuple
    coeffs: tuple

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.fields[0].n

    def growth(self) -> float:
        return max(f.growth() for f in self.fields)

    def __call__(self, X):
        return sum(c * f(X) for f, c in zip(self.fields, self.coeffs))

    def support(self):
        sup = [f.support() for f in self.fields]
        if any(p is None for p in sup):
            return None
        c = np.mean([p[0] for p in sup], axis=0)
        R = max(float(np.linalg.norm(p[0] - c)) + p[1] for p in sup)
        return c, R, float(sum(k * p[2] for k, p in zip(self.coeffs, sup)))

    def smooth_scale(self) -> float:
        return min(f.smooth_scale() for f in self.fields)

    def line_data(self, x, theta) -> LineData:
        parts = [f.line_data(x, theta) for f in self.fields]
        return LineData(
            breaks=tuple(b for p in parts for b in p.breaks),
            kinks=tuple(k for p in parts for k in p.kinks),
            scale=min(p.scale for p in parts),
            tail=_merge_tails([p.tail for p in parts], self.coeffs),
        )


# ---------------------------------------------------------------- grid functions


@dataclass(frozen=True, eq=False)
class GridFunction(Field):
    """Node values on a uniform grid plus an explicit far-field model.

    Inside the grid box the field is the cubic spline interpolant of the
    node values; outside it is given by ``far_field``.
    """

    grid: Grid
    values: np.ndarray
    far_field: FarFieldModel = field(default_factory=FarFieldModel)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.far_field.kind == "power_profile" and len(self.far_field.direction) != self.grid.n:
            raise ValueError("far-field direction dimension does not match the grid")
        ax = self.grid.axes()
        if self.grid.n == 1:
            spl = make_interp_spline(ax[0], v, k=3)
        else:
            spl = RectBivariateSpline(ax[0], ax[1], v, kx=3, ky=3, s=0)
        object.__setattr__(self, "_spline", spl)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, far_field: FarFieldModel | None = None) -> "GridFunction":
        return cls(grid, f(grid.points()), far_field or FarFieldModel())

    @property
    def n(self) -> int:  # type: ignore[override]
        return self.grid.n

    def growth(self) -> float:
        return self.far_field.growth()

    def support(self):
        ff = self.far_field
        if ff.kind == "power_profile":
            return None
        lo, hi = np.asarray(self.grid.lo), np.asarray(self.grid.hi)
        return 0.5 * (lo + hi), 0.5 * float(np.linalg.norm(hi - lo)), float(ff.value if ff.kind == "bounded_constant" else 0.0)

    def smooth_scale(self) -> float:
        return 4.0 * self.grid.h

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        shape = X.shape[:-1]
        P = X.reshape(-1, self.n)
        lo = np.asarray(self.grid.lo)
        hi = np.asarray(self.grid.hi)
        inside = np.all((P >= lo) & (P <= hi), axis=-1)
        out = self.far_field(P)
        if np.any(inside):
            Q = P[inside]
            if self.n == 1:
                out[inside] = self._spline(Q[:, 0])  # type: ignore[attr-defined]
            else:
                out[inside] = self._spline.ev(Q[:, 0], Q[:, 1])  # type: ignore[attr-defined]
        return out.reshape(shape)

    def line_data(self, x, theta) -> LineData:
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        kinks = []
        lo, hi = np.asarray(self.grid.lo), np.asarray(self.grid.hi)
        for i, ax in enumerate(self.grid.axes()):
            if theta[i] != 0.0:
                kinks.extend(np.abs((ax - x[i]) / theta[i]).tolist())
        # farthest exit from the box along either direction
        exits = []
        for i in range(self.n):
            if theta[i] != 0.0:
                exits.extend([abs((lo[i] - x[i]) / theta[i]), abs((hi[i] - x[i]) / theta[i])])
        R = max(exits) if exits else 0.0
        ff = self.far_field
        breaks: tuple = ()
        if ff.kind == "zero":
            tail = LineTail("zero", R)
        elif ff.kind == "bounded_constant":
            tail = LineTail("constant", R, ff.value)
        else:
            brk, t = _power_line(x, theta, np.asarray(ff.direction), ff.beta)
            breaks = brk
            tail = LineTail(t.kind, R, ff.coefficient * t.value, t.beta)
        return LineData(breaks=breaks, kinks=tuple(kinks), scale=math.inf, tail=tail)


# ---------------------------------------------------------------- weighted norm


def _omega(X: np.ndarray, s: float, n: int) -> np.ndarray:
    return (1.0 - s) * (1.0 + np.linalg.norm(X, axis=-1)) ** (-n - 2.0 * s)


def _hat_weights(grid: Grid, s: float, m: int = 8) -> np.ndarray:
    """Integrals of each piecewise-(bi)linear hat against omega_s over the box."""
    gx, gw = gauss_legendre(m)
    axes = grid.axes()
    h = grid.h
    if grid.n == 1:
        ax = axes[0]
        W = np.zeros(ax.size)
        for j in range(ax.size - 1):
            a, b = ax[j], ax[j + 1]
            cuts = [a, b] if not a < 0 < b else [a, 0.0, b]
            for c0, c1 in zip(cuts[:-1], cuts[1:]):
                x = c0 + (c1 - c0) * gx
                w = (c1 - c0) * gw * _omega(x[:, None], s, 1)
                t = (x - a) / (b - a)
                W[j] += np.sum(w * (1 - t))
                W[j + 1] += np.sum(w * t)
        return W
    ax0, ax1 = axes
    W = np.zeros((ax0.size, ax1.size))
    tx, ty = np.meshgrid(gx, gx, indexing="ij")
    ww = np.outer(gw, gw) * h * h
    for i in range(ax0.size - 1):
        for j in range(ax1.size - 1):
            X = np.stack([ax0[i] + h * tx, ax1[j] + h * ty], axis=-1)
            w = ww * _omega(X, s, 2)
            W[i, j] += np.sum(w * (1 - tx) * (1 - ty))
            W[i + 1, j] += np.sum(w * tx * (1 - ty))
            W[i, j + 1] += np.sum(w * (1 - tx) * ty)
            W[i + 1, j + 1] += np.sum(w * tx * ty)
    return W


def _box_integral_2d(f: Callable, lo, hi, cuts0=(), cuts1=(), m: int = 24) -> float:
    gx, gw = gauss_legendre(m)
    total = 0.0
    e0 = sorted({lo[0], hi[0], *[c for c in cuts0 if lo[0] < c < hi[0]]})
    e1 = sorted({lo[1], hi[1], *[c for c in cuts1 if lo[1] < c < hi[1]]})
    # subdivide into roughly unit panels for accuracy on large boxes
    e0 = _refine(e0)
    e1 = _refine(e1)
    for a0, b0 in zip(e0[:-1], e0[1:]):
        for a1, b1 in zip(e1[:-1], e1[1:]):
            x0 = a0 + (b0 - a0) * gx
            x1 = a1 + (b1 - a1) * gx
            X = np.stack(np.meshgrid(x0, x1, indexing="ij"), axis=-1)
            total += float(np.sum(np.outer(gw, gw) * (b0 - a0) * (b1 - a1) * f(X)))
    return total


def _refine(edges):
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(math.ceil((b - a) / 0.5)))
        out.extend(a + (b - a) * np.arange(1, k + 1) / k)
    return out


def _tail_1d(ff: FarFieldModel, s: float, lo: float, hi: float) -> float:
    """Integral of |far field| * omega_s over R minus [lo, hi], in closed form."""
    if ff.kind == "zero":
        return 0.0

    def right(a, kind):
        # int_a^inf g(x) (1+|x|)^(-1-2s) dx, with g = 1 (kind 0) or x_+^beta (kind 1)
        if kind == 0:
            if a >= 0:
                return (1 + a) ** (-2 * s) / (2 * s)
            return 2.0 / (2 * s) - (1 + (-a)) ** (-2 * s) / (2 * s)
        b = ff.beta
        a = max(a, 0.0)
        p, q = b + 1.0, 2 * s - b
        return beta_fn(p, q) * (1.0 - betainc(p, q, a / (1.0 + a)))

    if ff.kind == "bounded_constant":
        return (1 - s) * abs(ff.value) * (right(hi, 0) + right(-lo, 0))
    nu = ff.direction[0]
    c = abs(ff.coefficient)
    if nu < 0:
        lo, hi = -hi, -lo
    # exterior = (hi, inf) plus the part of (0, lo) on the positive side
    extra = right(0.0, 1) - right(lo, 1) if lo > 0 else 0.0
    return (1 - s) * c * (right(hi, 1) + extra)


def _tail_2d(ff: FarFieldModel, s: float, lo, hi) -> float:
    """Whole-plane closed form minus the box part computed by quadrature."""
    if ff.kind == "zero":
        return 0.0
    if ff.kind == "bounded_constant":
        whole = (1 - s) * 2 * math.pi * beta_fn(2.0, 2 * s)
        box = _box_integral_2d(lambda X: _omega(X, s, 2), lo, hi, (0.0,), (0.0,))
        return abs(ff.value) * (whole - box)
    b = ff.beta
    nu = np.asarray(ff.direction)
    whole = (1 - s) * beta_fn(b + 2.0, 2 * s - b) * beta_fn(0.5, 0.5 * (b + 1.0))
    box = _box_integral_2d(lambda X: np.maximum(X @ nu, 0.0) ** b * _omega(X, s, 2), lo, hi, (0.0,), (0.0,), m=32)
    return abs(ff.coefficient) * (whole - box)


def weighted_l1_norm(u: GridFunction, s: float) -> float:
    """Integral of ``|u|`` against ``omega_s = (1-s)(1+|x|)^(-n-2s)``.

    The grid part integrates the piecewise-linear interpolant of ``|u|``
    exactly against ``omega_s`` (positive weights, so the norm is monotone in
    ``|u|``); the far-field part is evaluated in closed form.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    u.far_field.check_admissible(s)
    W = _hat_weights(u.grid, s)
    inner = float(np.sum(W * np.abs(u.values)))
    lo, hi = u.grid.lo, u.grid.hi
    if u.n == 1:
        tail = _tail_1d(u.far_field, s, lo[0], hi[0])
    else:
        tail = _tail_2d(u.far_field, s, lo, hi)
    return inner + tail
