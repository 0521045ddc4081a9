"""Monotone finite-difference Dirichlet solver for linear, Bellman and Isaacs operators.

Discretization (uniform grid of spacing ``h`` on a box containing the domain):

* cells not touching the evaluation node: the kernel is integrated exactly
  (tensor Gauss-Legendre per cell) against the piecewise-(bi)linear hat of
  every node, giving nonnegative weights;
* the square ``|y|_inf < h``: second-order Taylor expansion, with the
  kernel's second moments multiplying a monotone 3- or 9-point Hessian;
* beyond the box: the far-field model, integrated along rays.

Rows annihilate constants by construction.  Consistency is
``O(h^(2-2s))`` for smooth data and is measured, not assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import Domain, FarFieldModel, Grid, GridFunction, distance_function
from .operators import IsaacsOperator, KernelSpec
from .quadrature import gauss_jacobi_left, gauss_legendre

__all__ = [
    "DirichletProblem",
    "Stencil",
    "SolveReport",
    "SolverConfig",
    "build_stencil",
    "build_singular_stencil",
    "solve_linear",
    "solve_isaacs",
    "solve",
    "value_iteration",
    "convergence_study",
    "SolverInputError",
]


class SolverInputError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Solver controls.

    Attributes
    ----------
    method : {"direct", "jacobi"}
        Linear solver for each policy.
    scheme : {"standard", "singular"}
        ``standard`` interpolates ``u`` by hats; ``singular`` interpolates
        ``u / d^s`` and keeps the factor ``d^s`` exact (zero exterior data,
        intervals and half-space truncations only).
    tol : float
        Residual sup-norm target.
    max_iter : int
        Iteration cap (Jacobi sweeps, policy iterations, value iterations).
    damping : float
        Jacobi relaxation factor in (0, 1].
    """

    method: str = "direct"
    scheme: str = "standard"
    tol: float = 1e-10
    max_iter: int = 20000
    damping: float = 1.0

    def __post_init__(self):
        if self.method not in ("direct", "jacobi"):
            raise SolverInputError(f"unknown solver method {self.method!r}")
        if self.scheme not in ("standard", "singular"):
            raise SolverInputError(f"unknown discretization scheme {self.scheme!r}")
        if not 0 < self.tol < 1:
            raise SolverInputError("solver tol must lie in (0, 1)")
        if not 0 < self.damping <= 1:
            raise SolverInputError("damping must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """``I u = f`` in the domain, ``u = g`` outside.

    Parameters
    ----------
    operator : KernelSpec or IsaacsOperator
    domain, grid :
        The grid box must strictly contain the domain.
    rhs : float or callable
        ``f`` at interior nodes (callable on an ``(m, n)`` point array).
    exterior : float or callable
        ``g`` at grid nodes outside the domain (default 0).
    far_field : FarFieldModel
        ``g`` beyond the grid box: zero or a bounded constant.
    """

    operator: object
    domain: Domain
    grid: Grid
    rhs: object = 0.0
    exterior: object = 0.0
    far_field: FarFieldModel = field(default_factory=FarFieldModel)

    def __post_init__(self):
        if self.domain.n != self.grid.n:
            raise SolverInputError("domain and grid dimensions differ")
        lo, hi = self.domain.bounds
        glo, ghi = np.asarray(self.grid.lo), np.asarray(self.grid.hi)
        if self.domain.kind == "half_space_truncation":
            lo = lo.copy()
            lo[-1] = 0.0
        if not (np.all(glo < lo) and np.all(ghi > hi)):
            raise SolverInputError("grid box must strictly contain the domain")
        if self.far_field.kind == "power_profile":
            raise SolverInputError("solver exterior data must be bounded (zero or bounded_constant far field)")

    @property
    def s(self) -> float:
        return self.operator.s  # type: ignore[attr-defined]

    def with_grid(self, grid: Grid) -> "DirichletProblem":
        return DirichletProblem(self.operator, self.domain, grid, self.rhs, self.exterior, self.far_field)

    def interior_mask(self) -> np.ndarray:
        return self.domain.contains(self.grid.points())

    def node_values(self, spec, pts: np.ndarray) -> np.ndarray:
        if callable(spec):
            return np.asarray(spec(pts), dtype=float).reshape(len(pts))
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            return np.full(len(pts), float(arr))
        if arr.size != len(pts):
            raise SolverInputError("node data has the wrong length")
        return arr.reshape(len(pts))


@dataclass
class Stencil:
    """Dense monotone stencil on a grid.

    ``weights[i, j] >= 0`` couples interior node ``i`` to grid node ``j``;
    ``far[i] >= 0`` couples it to the far field; ``diag[i] =
    -(sum_j weights[i, j] + far[i])``.
    """

    grid: Grid
    interior: np.ndarray  # flat indices of interior nodes
    weights: np.ndarray
    diag: np.ndarray
    far: np.ndarray
    clipped: int = 0
    scheme: str = "standard"

    def row_sums(self) -> np.ndarray:
        """Action on constants (zero far field counts as constant 0)."""
        return self.weights.sum(axis=1) + self.diag + self.far

    def matrix(self) -> np.ndarray:
        """Operator restricted to interior unknowns (exterior values removed)."""
        A = self.weights[:, self.interior].copy()
        A[np.arange(self.interior.size), np.arange(self.interior.size)] += self.diag
        return A

    def apply(self, u: GridFunction | np.ndarray, far_value: float = 0.0, s: float | None = None, dens=None) -> np.ndarray:
        """Discrete operator at interior nodes.

        ``u`` is a grid function (its far field is used) or a vector of all
        node values (then ``far_value`` is the constant exterior).
        """
        if isinstance(u, GridFunction):
            vals = u.values.ravel()
            ff = u.far_field
            if ff.kind == "power_profile":
                if s is None or dens is None:
                    raise ValueError("power far fields need s and the kernel density")
                pts = self.grid.points()[self.interior]
                far_int = _far_power(ff, pts, self.grid, s, dens)
                return self.weights @ vals + self.diag * vals[self.interior] + far_int
            far_value = ff.value if ff.kind == "bounded_constant" else 0.0
        else:
            vals = np.asarray(u, dtype=float).ravel()
        return self.weights @ vals + self.diag * vals[self.interior] + self.far * far_value


# ---------------------------------------------------------------- kernel density


def _density(L: KernelSpec):
    """``(dens, homogeneous, jumps, outer)`` with ``K(y) = dens(y) |y|^(-n-2s)``."""
    if L.cls == "star":
        mu = L.mu

        def dens(Y):
            nrm = np.linalg.norm(Y, axis=-1, keepdims=True)
            return mu(Y / np.where(nrm > 0, nrm, 1.0))

        return dens, True, (), 0.0
    b = L.b
    if b.angular is not None:
        return b, True, (), 0.0
    return b, False, tuple(sorted(b.radial_jumps)), float(b.outer_radius)


def _cell_points(n: int, m: int):
    gx, gw = gauss_legendre(m)
    if n == 1:
        return gx[:, None], gw
    T = np.stack(np.meshgrid(gx, gx, indexing="ij"), axis=-1).reshape(-1, 2)
    return T, np.outer(gw, gw).ravel()


def _offset_weights(dens, s: float, h: float, shape: tuple, m: int = 8) -> np.ndarray:
    """Kernel integrated against each offset's hat over cells away from 0."""
    n = len(shape)
    W = np.zeros(tuple(2 * M - 1 for M in shape))
    ranges = [np.arange(-(M - 1), M - 1) for M in shape]
    C = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
    touch = np.all((C == 0) | (C == -1), axis=1)
    C = C[~touch]
    T, wq = _cell_points(n, m)
    T2, wq2 = _cell_points(n, 2 * m)
    near = np.max(np.abs(C + 0.5), axis=1) < 3.0
    shift = np.array([M - 1 for M in shape])
    corners = np.stack(np.meshgrid(*[[0, 1]] * n, indexing="ij"), axis=-1).reshape(-1, n)
    for sel, TT, ww in ((~near, T, wq), (near, T2, wq2)):
        Cs = C[sel]
        hats = [np.prod(np.where(e == 1, TT, 1.0 - TT), axis=-1) for e in corners]
        for k in range(0, len(Cs), 4096):
            Cc = Cs[k : k + 4096]
            Y = (Cc[:, None, :] + TT[None]) * h
            r = np.linalg.norm(Y, axis=-1)
            kv = (1.0 - s) * dens(Y) * r ** (-n - 2.0 * s) * (h**n) * ww
            for e, hat in zip(corners, hats):
                idx = tuple((Cc + e + shift).T)
                np.add.at(W, idx, kv @ hat)
    return W


def _ray_integral(dens, th: np.ndarray, lo: np.ndarray, hi: np.ndarray, s: float, p: float, jumps, m: int = 16) -> np.ndarray:
    """``int_lo^hi dens(r th) r^p dr`` per ray; ``lo`` may be 0 (needs p > -1).

    Panels are split at the radial jumps of ``dens``; the first panel from 0
    uses a Jacobi weight ``r^p``, the others are Gauss-Legendre in ``log r``.
    """
    th = np.atleast_2d(th)
    lo = np.broadcast_to(lo, (th.shape[0],)).astype(float)
    hi = np.broadcast_to(hi, (th.shape[0],)).astype(float)
    cuts = [lo] + [np.clip(np.full_like(lo, j), lo, hi) for j in jumps] + [hi]
    total = np.zeros(th.shape[0])
    gx, gw = gauss_legendre(m)
    tj, wj = gauss_jacobi_left(m, p) if p > -1 else (None, None)
    for a, b in zip(cuts[:-1], cuts[1:]):
        ok = b > a
        if not np.any(ok):
            continue
        a_, b_, t_ = a[ok], b[ok], th[ok]
        zero = a_ == 0.0
        out = np.zeros(a_.size)
        if np.any(zero):
            r = b_[zero, None] * tj[None, :]
            Y = r[..., None] * t_[zero, None, :]
            out[zero] = b_[zero] ** (p + 1.0) * np.sum(wj * dens(Y), axis=-1)
        pos = ~zero
        if np.any(pos):
            la, lb = np.log(a_[pos]), np.log(b_[pos])
            L = la[:, None] + (lb - la)[:, None] * gx[None, :]
            r = np.exp(L)
            Y = r[..., None] * t_[pos, None, :]
            out[pos] = (lb - la) * np.sum(gw * dens(Y) * r ** (p + 1.0), axis=-1)
        total[ok] += out
    return total


def _ray_tail(dens, homogeneous: bool, th: np.ndarray, rho: np.ndarray, s: float, jumps, outer: float) -> np.ndarray:
    """``int_rho^inf dens(r th) r^(-1-2s) dr`` per ray."""
    th = np.atleast_2d(th)
    if homogeneous:
        return dens(th) * rho ** (-2.0 * s) / (2.0 * s)
    R = np.maximum(rho, outer)
    inner = _ray_integral(dens, th, rho, R, s, -1.0 - 2.0 * s, jumps)
    return inner + dens(th * (R[:, None] + 1.0)) * R ** (-2.0 * s) / (2.0 * s)


def _angle_sectors(pts: np.ndarray, lo, hi, extra=(), m: int = 24):
    """Per point: directions and weights for a composite rule on the circle
    with edges at the box-corner directions (and ``extra`` angles)."""
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    D = corners[None, :, :] - pts[:, None, :]
    ang = np.mod(np.arctan2(D[..., 1], D[..., 0]), 2 * np.pi)
    if len(extra):
        ex = np.mod(np.concatenate([np.asarray(extra), np.asarray(extra) + np.pi]), 2 * np.pi)
        ang = np.concatenate([ang, np.broadcast_to(ex, (len(pts), ex.size))], axis=1)
    ang = np.sort(ang, axis=1)
    edges = np.concatenate([ang, ang[:, :1] + 2 * np.pi], axis=1)
    gx, gw = gauss_legendre(m)
    a, b = edges[:, :-1], edges[:, 1:]
    t = a[..., None] + (b - a)[..., None] * gx
    w = (b - a)[..., None] * gw
    return t.reshape(len(pts), -1), w.reshape(len(pts), -1)


def _exit_distance(pts: np.ndarray, th: np.ndarray, lo, hi) -> np.ndarray:
    """Distance from each point along each direction to the box boundary."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = (np.asarray(hi) - pts[:, None, :]) / th
        dn = (np.asarray(lo) - pts[:, None, :]) / th
        t = np.where(th > 0, up, np.where(th < 0, dn, np.inf))
    return np.min(t, axis=-1)


def _far_coupling(dens, homogeneous, jumps, outer, s, pts: np.ndarray, grid: Grid, extra=()) -> np.ndarray:
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
    if grid.n == 1:
        x = pts[:, 0]
        out = np.zeros(len(pts))
        for sgn, rho in ((1.0, hi[0] - x), (-1.0, x - lo[0])):
            th = np.full((len(pts), 1), sgn)
            out += _ray_tail(dens, homogeneous, th, rho, s, jumps, outer)
        return (1.0 - s) * out
    t, w = _angle_sectors(pts, lo, hi, extra)
    th = np.stack([np.cos(t), np.sin(t)], axis=-1)
    rho = _exit_distance(pts, th, lo, hi)
    P, Q = t.shape
    vals = _ray_tail(dens, homogeneous, th.reshape(-1, 2), rho.reshape(-1), s, jumps, outer).reshape(P, Q)
    return (1.0 - s) * np.sum(w * vals, axis=1)


def _far_power(ff: FarFieldModel, pts, grid: Grid, s: float, dens, m: int = 48) -> np.ndarray:
    """``int_{x+y outside box} (g(x+y) - u(x)) K(y) dy`` for a power far field,
    excluding the ``-u(x)`` part already in the diagonal."""
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
    beta = ff.beta
    nu = np.asarray(ff.direction)
    tj, wj = gauss_jacobi_left(m, 2.0 * s - 1.0 - beta)
    if grid.n == 1:
        th = np.array([[1.0], [-1.0]])
        wt = np.ones(2)
        TH = np.broadcast_to(th, (len(pts), 2, 1))
        W = np.broadcast_to(wt, (len(pts), 2))
    else:
        t, W = _angle_sectors(pts, lo, hi)
        TH = np.stack([np.cos(t), np.sin(t)], axis=-1)
    rho = _exit_distance(pts, TH, lo, hi)
    a = pts @ nu
    b = TH @ nu
    # r = rho / t: int_0^1 coef (a t + rho b)_+^beta t^(2s-1-beta) rho^(-2s) dt
    z = a[:, None, None] * tj + (rho * b)[..., None]
    f = ff.coefficient * np.maximum(z, 0.0) ** beta
    per = rho ** (-2.0 * s) * np.sum(wj * f, axis=-1)
    d = dens(TH)
    return (1.0 - s) * np.sum(W * d * per, axis=-1)


def _near_moments(dens, homogeneous, jumps, s: float, h: float, n: int) -> np.ndarray:
    """``(1-s) int_{|y|_inf<h} dens(y) |y|^(-n-2s) y y^T / 2 dy``."""
    p = 1.0 - 2.0 * s
    if n == 1:
        th = np.array([[1.0], [-1.0]])
        v = _ray_integral(dens, th, np.zeros(2), np.full(2, h), s, p, jumps)
        return np.array([[(1.0 - s) * 0.5 * v.sum()]])
    edges = np.pi / 4 * np.arange(9)
    gx, gw = gauss_legendre(24)
    t = (edges[:-1, None] + np.diff(edges)[:, None] * gx).ravel()
    w = (np.diff(edges)[:, None] * gw).ravel()
    th = np.stack([np.cos(t), np.sin(t)], axis=-1)
    R = h / np.max(np.abs(th), axis=-1)
    if homogeneous:
        v = dens(th) * R ** (p + 1.0) / (p + 1.0)
    else:
        v = _ray_integral(dens, th, np.zeros(len(t)), R, s, p, jumps)
    M = np.einsum("q,q,qi,qj->ij", w, v, th, th)
    return (1.0 - s) * 0.5 * M


def build_stencil(L: KernelSpec, grid: Grid, domain: Domain, *, cell_order: int = 8) -> Stencil:
    """Monotone stencil of ``L`` at the grid nodes inside ``domain``.

    Raises
    ------
    SolverInputError
        If ``h >= 0.1`` (kernel not resolved) or dimensions disagree.
    """
    if not grid.h < 0.1:
        raise SolverInputError(f"grid spacing {grid.h} too coarse: need h < 0.1")
    if L.n != grid.n or domain.n != grid.n:
        raise SolverInputError("kernel, grid and domain dimensions differ")
    s, h, n = L.s, grid.h, grid.n
    dens, homog, jumps, outer = _density(L)
    W = _offset_weights(dens, s, h, grid.shape, cell_order)
    A = _near_moments(dens, homog, jumps, s, h, n) / h**2
    c = tuple(M - 1 for M in grid.shape)
    clipped = 0
    if n == 1:
        W[c[0] + 1] += A[0, 0]
        W[c[0] - 1] += A[0, 0]
    else:
        a11, a22, a12 = A[0, 0], A[1, 1], A[0, 1]
        diag_pair = ((1, 1), (-1, -1)) if a12 >= 0 else ((1, -1), (-1, 1))
        m12 = abs(a12)
        for (d0, d1), val in (((1, 0), a11 - m12), ((-1, 0), a11 - m12), ((0, 1), a22 - m12), ((0, -1), a22 - m12)):
            if val < 0:
                clipped += 1
                val = 0.0
            W[c[0] + d0, c[1] + d1] += val
        for d0, d1 in diag_pair:
            W[c[0] + d0, c[1] + d1] += m12
    pts = grid.points()
    mask = domain.contains(pts)
    interior = np.nonzero(mask)[0]
    idx = np.array(np.unravel_index(interior, grid.shape)).T
    rows = np.empty((interior.size, grid.size))
    for r, p in enumerate(idx):
        sl = tuple(slice(c[k] - p[k], c[k] - p[k] + grid.shape[k]) for k in range(n))
        rows[r] = W[sl].ravel()
    extra = L.mu.kink_angles() if (L.cls == "star" and n == 2) else ()
    far = _far_coupling(dens, homog, jumps, outer, s, pts[interior], grid, extra)
    diag = -(rows.sum(axis=1) + far)
    return Stencil(grid, interior, rows, diag, far, clipped)


# ---------------------------------------------------------------- singular basis
#
# u = d^s v with v piecewise (bi)linear.  Row i of the operator in v is
#   sum_j W_ij (v_j - v_i) + L(d^s)(x_i) v_i,
# W_ij = (1-s) int K(y) d^s(x_i+y) hat_j(x_i+y) dy >= 0, so the system is
# monotone whenever L(d^s) <= 0, which holds for the supported domains.


def _on_grid_line(v: float, lo: float, h: float) -> bool:
    k = (v - lo) / h
    return abs(k - round(k)) < 1e-8


class _SingularGeometry:
    """``d^s`` as a profile of the last coordinate times a wall indicator."""

    def __init__(self, domain: Domain, grid: Grid, s: float):
        lo, hi = domain.bounds
        self.s = s
        self.domain = domain
        if domain.kind == "half_space_truncation":
            top = float(hi[-1])
            self.zeros = (0.0,)
            self.lines = [(k, v) for k in range(domain.n - 1) for v in (lo[k], hi[k])] + [(domain.n - 1, 0.0), (domain.n - 1, top)]
            self.walls = (np.asarray(lo[:-1]), np.asarray(hi[:-1]))
            self._prof = lambda t: np.where((t > 0) & (t < top), t, 0.0)
        elif domain.n == 1:
            self.zeros = (float(lo[0]), float(hi[0]))
            self.lines = [(0, lo[0]), (0, hi[0])]
            self.walls = (np.zeros(0), np.zeros(0))
            self._prof = lambda t: np.asarray(distance_function(domain, np.asarray(t, dtype=float).reshape(-1, 1))).reshape(np.shape(t))
        else:
            raise SolverInputError("the singular scheme supports intervals and half-space truncations")
        glo = np.asarray(grid.lo)
        for k, v in self.lines:
            if not _on_grid_line(float(v), float(glo[k]), grid.h):
                raise SolverInputError("the singular scheme needs the domain boundary on grid lines")

    def prof_s(self, t):
        return self._prof(t) ** self.s

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        out = self.prof_s(Y[..., -1])
        if Y.shape[-1] > 1:
            wlo, whi = self.walls
            inside = np.all((Y[..., :-1] > wlo) & (Y[..., :-1] < whi), axis=-1)
            out = np.where(inside, out, 0.0)
        return out


def _last_axis_rules(geo: _SingularGeometry, a: np.ndarray, h: float, m: int):
    """Nodes ``t`` in [0, 1], weights and ``d^s`` values for the cells
    ``[a, a + h]`` of the last axis (one row per cell), with a Jacobi weight
    at a zero of ``d``."""
    gx, gw = gauss_legendre(m)
    T = np.broadcast_to(gx, (a.size, m)).copy()
    W = np.broadcast_to(gw, (a.size, m)).copy()
    D = geo.prof_s(a[:, None] + h * T)
    tj, wj = gauss_jacobi_left(m, geo.s)
    for z in geo.zeros:
        for k in np.nonzero(np.abs(a - z) < 1e-9 * h)[0]:
            T[k], W[k] = tj, wj
            D[k] = geo.prof_s(a[k] + h * tj) / tj**geo.s
        for k in np.nonzero(np.abs(a + h - z) < 1e-9 * h)[0]:
            T[k], W[k] = 1.0 - tj, wj
            D[k] = geo.prof_s(a[k] + h * (1.0 - tj)) / tj**geo.s
    return T, W, D


def _level_cells(dens, s, h, grid: Grid, geo: _SingularGeometry, X: float, m: int = 8) -> tuple:
    """Corner integrals ``(1-s) int_cell K(y) d^s(x+y) hat_e`` for every cell
    offset, at a node whose last coordinate is ``X``.

    Returns ``(offsets, I)``: cell offsets ``(N, n)`` and ``I`` of shape
    ``(2**n, N)`` (corners in ``itertools.product`` order).
    """
    n = grid.n
    shape = grid.shape
    c_last = np.arange(-(shape[-1] - 1), shape[-1] - 1)
    a = X + c_last * h
    live = geo.prof_s(a + 0.5 * h) > 0.0
    if n == 1:
        c1 = c_last[live & (c_last != -1) & (c_last != 0)]
        T, W, D = _last_axis_rules(geo, X + c1 * h, h, 2 * m)
        y = (c1[:, None] + T) * h
        kv = (1.0 - s) * dens(y[..., None]) * np.abs(y) ** (-1.0 - 2.0 * s) * h * W * D
        I = np.stack([np.sum(kv * (1.0 - T), axis=1), np.sum(kv * T, axis=1)])
        return c1[:, None], I
    c0 = np.arange(-(shape[0] - 1), shape[0] - 1)
    offs, vals = [], []
    for near in (True, False):
        sel = live & ((np.abs(c_last + 0.5) < 3) == near)
        if not np.any(sel):
            continue
        mm = 2 * m if near else m
        T1, W1, D1 = _last_axis_rules(geo, X + c_last[sel] * h, h, mm)
        t0, w0 = gauss_legendre(mm)
        for c1, t1, w1, d1 in zip(c_last[sel], T1, W1, D1):
            cc = c0[~((c0 >= -1) & (c0 <= 0))] if c1 in (-1, 0) else c0
            Y = np.empty((cc.size, mm, mm, 2))
            Y[..., 0] = ((cc[:, None] + t0[None, :]) * h)[:, :, None]
            Y[..., 1] = ((c1 + t1) * h)[None, None, :]
            r = np.linalg.norm(Y, axis=-1)
            kv = (1.0 - s) * dens(Y) * r ** (-2.0 - 2.0 * s) * h * h * (w0[:, None] * (w1 * d1)[None, :])
            A0 = np.einsum("cij,j->ci", kv, 1.0 - t1)
            A1 = np.einsum("cij,j->ci", kv, t1)
            parts = [A0 @ (1.0 - t0), A1 @ (1.0 - t0), A0 @ t0, A1 @ t0]
            offs.append(np.stack([cc, np.full(cc.size, c1)], axis=1))
            vals.append(np.array(parts))
    if not offs:
        return np.zeros((0, n), dtype=int), np.zeros((2**n, 0))
    return np.concatenate(offs), np.concatenate(vals, axis=1)


def _singular_near(dens, s, h, x: np.ndarray, geo: _SingularGeometry, m: int = 24):
    """Drift ``b`` and second moments ``A`` of ``K(y) d^s(x+y)`` over ``|y|_inf < h``."""
    n = x.size
    if n == 1:
        th = np.array([[1.0], [-1.0]])
        wth = np.ones(2)
    else:
        edges = np.pi / 4 * np.arange(9)
        gx, gw = gauss_legendre(m)
        t = (edges[:-1, None] + np.diff(edges)[:, None] * gx).ravel()
        wth = (np.diff(edges)[:, None] * gw).ravel()
        th = np.stack([np.cos(t), np.sin(t)], axis=-1)
    R = h / np.max(np.abs(th), axis=-1)
    mu = dens(th)
    D0 = geo(x)
    # [0, R/2]: Jacobi weight r^(1-2s); [R/2, R]: r = R - (R/2) u^2 smooths a
    # (R - r)^s endpoint.
    tj, wj = gauss_jacobi_left(m, 1.0 - 2.0 * s)
    gx, gw = gauss_legendre(m)
    Rh = 0.5 * R
    r1 = Rh[:, None] * tj
    D1 = geo(x + r1[..., None] * th[:, None, :])
    c1 = Rh ** (2.0 - 2.0 * s)
    b_in = c1 * np.sum(wj * (D1 - D0) / r1, axis=1)
    a_in = c1 * np.sum(wj * D1, axis=1)
    r2 = R[:, None] - Rh[:, None] * gx**2
    jac = R[:, None] * gx * gw
    D2 = geo(x + r2[..., None] * th[:, None, :])
    b_out = np.sum(jac * (D2 - D0) * r2 ** (-2.0 * s), axis=1)
    a_out = np.sum(jac * D2 * r2 ** (1.0 - 2.0 * s), axis=1)
    b = (1.0 - s) * np.einsum("q,q,q,qi->i", wth, mu, b_in + b_out, th)
    A = 0.5 * (1.0 - s) * np.einsum("q,q,q,qi,qj->ij", wth, mu, a_in + a_out, th, th)
    return b, A


def _lds_half_space(dens, s, pts: np.ndarray, domain: Domain, m: int = 32) -> np.ndarray:
    """``L((x_n)_+^s chi)`` = minus the mass of ``(x_n+y_n)_+^s K`` beyond the box."""
    lo, hi = domain.bounds
    lo = lo.copy()
    lo[-1] = 0.0
    n = domain.n
    if n == 1:
        TH = np.broadcast_to(np.array([[1.0], [-1.0]]), (len(pts), 2, 1))
        W = np.ones((len(pts), 2))
    else:
        t, W = _angle_sectors(pts, lo, hi)
        TH = np.stack([np.cos(t), np.sin(t)], axis=-1)
    rho = _exit_distance(pts, TH, lo, hi)
    xn = pts[:, -1][:, None]
    tn = TH[..., -1]
    tj, wj = gauss_jacobi_left(m, s - 1.0)
    up = rho ** (-2.0 * s) * np.sum(wj * np.maximum(xn[..., None] * tj + (rho * tn)[..., None], 0.0) ** s, axis=-1)
    ts = np.where(tn < 0, rho * np.abs(tn) / xn, 2.0)
    tu, wu = gauss_jacobi_left(m, s)
    tc = np.minimum(ts, 1.0)[..., None]
    inner = np.sum(wu * (tc + (1.0 - tc) * tu) ** (s - 1.0), axis=-1)
    dn = rho ** (-2.0 * s) * xn**s * np.clip(1.0 - ts, 0.0, None) ** (1.0 + s) * inner
    J = np.where(tn >= 0, up, dn)
    return -(1.0 - s) * np.sum(W * dens(TH) * J, axis=-1)


def _lds_interval(L: KernelSpec, pts: np.ndarray, domain: Domain) -> np.ndarray:
    from .core import RadialField
    from .operators import eval_linear
    from .quadrature import LineTail

    R = domain.radius[0]
    band = domain.boundary_band
    s = L.s
    c = domain.center[0]

    def prof(rho):
        return np.asarray(distance_function(domain, (c + np.asarray(rho, dtype=float)).reshape(-1, 1))).reshape(np.shape(rho)) ** s

    f = RadialField(prof, 1, (R, R - band, R - 2 * band), LineTail("zero", R), band, (c,))
    return np.array([eval_linear(L, f, x, route="polar").value for x in pts])


def build_singular_stencil(L: KernelSpec, grid: Grid, domain: Domain, *, cell_order: int = 8) -> Stencil:
    """Monotone stencil for ``u = d^s v`` with ``v`` interpolated by hats.

    The boundary factor ``d^s`` is integrated exactly, so ``u / d^s`` has no
    grid-scale boundary layer.  Exterior data must vanish.  The returned
    stencil acts on ``u`` (columns are divided by ``d^s`` at the nodes);
    rows do not annihilate constants, they send ``d^s`` to ``L(d^s) <= 0``.
    """
    if not grid.h < 0.1:
        raise SolverInputError(f"grid spacing {grid.h} too coarse: need h < 0.1")
    if L.n != grid.n or domain.n != grid.n:
        raise SolverInputError("kernel, grid and domain dimensions differ")
    if grid.n > 2:
        raise SolverInputError("the singular scheme is implemented for n <= 2")
    s, h, n = L.s, grid.h, grid.n
    dens, homog, jumps, outer = _density(L)
    if not homog:
        raise SolverInputError("the singular scheme needs a homogeneous kernel")
    geo = _SingularGeometry(domain, grid, s)
    pts = grid.points()
    mask = domain.contains(pts)
    interior = np.nonzero(mask)[0]
    N = interior.size
    Ds = geo(pts)
    target = np.full(grid.size, -1)
    target[interior] = np.arange(N)
    # exterior nodes on a zero of d take the value of v at the adjacent interior node
    axes = grid.axes()
    multi = np.array(np.unravel_index(np.arange(grid.size), grid.shape)).T
    last = axes[-1][multi[:, -1]]
    for z in geo.zeros:
        on = np.nonzero(np.abs(last - z) < 1e-9 * h)[0]
        for j in on:
            for step in (1, -1):
                k = multi[j].copy()
                k[-1] += step
                if 0 <= k[-1] < grid.shape[-1]:
                    fl = np.ravel_multi_index(tuple(k), grid.shape)
                    if mask[fl]:
                        target[j] = target[fl]
    idx = multi[interior]
    corners = np.stack(np.meshgrid(*[[0, 1]] * n, indexing="ij"), axis=-1).reshape(-1, n)
    Wv = np.zeros((N, N))
    total = np.zeros(N)
    levels = {}
    for r, p in enumerate(idx):
        lv = int(p[-1])
        if lv not in levels:
            levels[lv] = _level_cells(dens, s, h, grid, geo, float(axes[-1][lv]), cell_order)
        offs, I = levels[lv]
        a = p + offs
        ok = np.all((a >= 0) & (a <= np.array(grid.shape) - 2), axis=1)
        if n == 2:
            wlo, whi = geo.walls
            x0 = axes[0]
            a0 = np.clip(a[:, 0], 0, grid.shape[0] - 2)
            ok &= (x0[a0] >= wlo[0] - 1e-9 * h) & (x0[a0 + 1] <= whi[0] + 1e-9 * h)
        a = a[ok]
        for e, ce in zip(corners, I[:, ok]):
            tg = target[np.ravel_multi_index(tuple((a + e).T), grid.shape)]
            total[r] += ce.sum()
            keep = tg >= 0
            Wv[r] += np.bincount(tg[keep], weights=ce[keep], minlength=N)
    clipped = 0
    for r, p in enumerate(idx):
        x = pts[interior[r]]
        b, A = _singular_near(dens, s, h, x, geo)
        A = A / h**2
        b = b / h
        nb = []
        if n == 1:
            nb += [((1,), A[0, 0] + max(b[0], 0.0)), ((-1,), A[0, 0] + max(-b[0], 0.0))]
        else:
            m12 = abs(A[0, 1])
            for k in range(2):
                for sg in (1, -1):
                    d = [0, 0]
                    d[k] = sg
                    val = A[k, k] - m12
                    if val < 0:
                        clipped += 1
                        val = 0.0
                    nb.append((tuple(d), val + max(sg * b[k], 0.0)))
            for d in (((1, 1), (-1, -1)) if A[0, 1] >= 0 else ((1, -1), (-1, 1))):
                nb.append((d, m12))
        for d, val in nb:
            q = p + np.array(d)
            total[r] += val
            tg = target[np.ravel_multi_index(tuple(q), grid.shape)]
            if tg >= 0:
                Wv[r, tg] += val
    # mass a ghost sends back to its own row cancels in v_j - v_i
    selfmass = Wv.diagonal().copy()
    Wv[np.arange(N), np.arange(N)] = 0.0
    xi = pts[interior]
    if domain.kind == "half_space_truncation":
        Ld = _lds_half_space(dens, s, xi, domain)
    else:
        Ld = _lds_interval(L, xi, domain)
    if np.any(Ld > 0):
        raise SolverInputError("L(d^s) is positive somewhere: the singular scheme would not be monotone")
    rowsum_v = total - selfmass
    diag_v = -rowsum_v + Ld
    Dint = Ds[interior]
    rows = np.zeros((N, grid.size))
    rows[:, interior] = Wv / Dint[None, :]
    diag = diag_v / Dint
    return Stencil(grid, interior, rows, diag, np.zeros(N), clipped, "singular")


# ---------------------------------------------------------------- solves


@dataclass
class SolveReport:
    """Outcome of a solve.

    ``policy_switches[k]`` counts nodes whose policy changed in outer
    iteration ``k`` (empty for linear solves).
    """

    solution: GridFunction
    iterations: int
    residual: float
    converged: bool
    method: str
    policy_switches: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    fallback: bool = False
    message: str = ""
    policy: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "method": self.method,
            "fallback": self.fallback,
            "policy_switches": list(map(int, self.policy_switches)),
            "message": self.message,
        }


def _stencil_for(L: KernelSpec, p: DirichletProblem, cfg: SolverConfig) -> Stencil:
    if cfg.scheme == "singular":
        return build_singular_stencil(L, p.grid, p.domain)
    return build_stencil(L, p.grid, p.domain)


def _setup(p: DirichletProblem, cfg: SolverConfig | None = None):
    pts = p.grid.points()
    mask = p.interior_mask()
    if not np.any(mask):
        raise SolverInputError("no grid nodes inside the domain")
    f = p.node_values(p.rhs, pts[mask])
    g = np.zeros(p.grid.size)
    g[~mask] = p.node_values(p.exterior, pts[~mask])
    gfar = p.far_field.value if p.far_field.kind == "bounded_constant" else 0.0
    if cfg is not None and cfg.scheme == "singular" and (np.any(g != 0.0) or gfar != 0.0):
        raise SolverInputError("the singular scheme needs zero exterior data")
    return pts, mask, f, g, gfar


def _assemble(st: Stencil, g: np.ndarray, gfar: float):
    """Interior matrix and the constant part of each row (exterior data)."""
    A = st.matrix()
    ext = np.ones(st.grid.size, dtype=bool)
    ext[st.interior] = False
    const = st.weights[:, ext] @ g[ext] + st.far * gfar
    return A, const


def _jacobi(A, b, x0, cfg: SolverConfig):
    d = np.diag(A).copy()
    x = x0.copy()
    hist = []
    for k in range(1, cfg.max_iter + 1):
        r = b - A @ x
        res = float(np.max(np.abs(r)))
        hist.append(res)
        if res <= cfg.tol:
            return x, k, hist, True
        x = x + cfg.damping * r / d
    return x, cfg.max_iter, hist, False


def _linear_solve(A, b, cfg: SolverConfig, x0=None):
    if cfg.method == "direct":
        x = lu_solve(lu_factor(A), b)
        return x, 1, [float(np.max(np.abs(A @ x - b)))], True
    return _jacobi(A, b, np.zeros_like(b) if x0 is None else x0, cfg)


def _report(p, mask, g, u_int, **kw) -> SolveReport:
    vals = g.copy()
    vals[mask] = u_int
    sol = GridFunction(p.grid, vals, p.far_field)
    return SolveReport(solution=sol, **kw)


def solve_linear(p: DirichletProblem, cfg: SolverConfig = SolverConfig(), stencil: Stencil | None = None) -> SolveReport:
    """Solve ``L u = f`` for a single kernel with exterior data ``g``."""
    L = p.operator
    if isinstance(L, IsaacsOperator):
        if len(L.A) == 1 and len(L.B) == 1:
            return solve_isaacs(p, cfg)
        raise SolverInputError("solve_linear needs a single kernel")
    pts, mask, f, g, gfar = _setup(p, cfg)
    st = stencil or _stencil_for(L, p, cfg)
    A, const = _assemble(st, g, gfar)
    return _solve_policy_system(p, mask, g, A, f - const, cfg, "linear")


def _solve_policy_system(p, mask, g, A, b, cfg, label):
    u, it, hist, ok = _linear_solve(A, b, cfg)
    res = float(np.max(np.abs(A @ u - b)))
    ok = ok and res <= max(cfg.tol, 1e3 * np.finfo(float).eps * float(np.max(np.abs(b)) + 1.0) * np.max(np.abs(np.diag(A))))
    msg = "" if ok else f"residual {res:.3e} above tolerance after {it} iterations"
    return _report(p, mask, g, u, iterations=it, residual=res, converged=ok, method=f"{label}/{cfg.method}", residual_history=hist, message=msg)


class _Family:
    """Stencils and costs of every (a, b) pair on the interior nodes."""

    def __init__(self, p: DirichletProblem, I: IsaacsOperator, g, gfar, pts_int, cfg: SolverConfig = SolverConfig()):
        self.A_idx = list(I.A)
        self.B_idx = list(I.B)
        self.mats = {}
        self.consts = {}
        self.costs = {}
        cache: dict = {}
        for a in I.A:
            for b in I.B:
                L = I.kernels[(a, b)]
                key = id(L)
                if key not in cache:
                    st = _stencil_for(L, p, cfg)
                    cache[key] = _assemble(st, g, gfar)
                self.mats[(a, b)], self.consts[(a, b)] = cache[key]
                c = I.costs.get((a, b), 0.0)
                if callable(c):
                    cv = np.asarray(c(pts_int), dtype=float).reshape(len(pts_int))
                else:
                    cv = np.full(len(pts_int), float(c))
                if not np.all(np.isfinite(cv)):
                    raise SolverInputError("cost values must be finite")
                self.costs[(a, b)] = cv

    def values(self, u):
        """``V[b][a] = L_ab u + c_ab`` at interior nodes."""
        return {b: np.stack([self.mats[(a, b)] @ u + self.consts[(a, b)] + self.costs[(a, b)] for a in self.A_idx]) for b in self.B_idx}

    def F(self, u):
        V = self.values(u)
        sups = np.stack([V[b].max(axis=0) for b in self.B_idx])
        return sups.min(axis=0)

    def diag_max(self) -> float:
        return max(float(np.max(np.abs(np.diag(M)))) for M in self.mats.values())


def _argmax_keep(V: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Row-wise argmax (lowest index on ties) that keeps the current choice
    when it is still optimal up to roundoff."""
    best = V.argmax(axis=0)
    top = V.max(axis=0)
    cur = V[current, np.arange(V.shape[1])]
    keep = cur >= top - 1e-13 * (1.0 + np.abs(top))
    return np.where(keep, current, best)


def _argmin_keep(V: np.ndarray, current: np.ndarray) -> np.ndarray:
    return _argmax_keep(-V, current)


def value_iteration(p: DirichletProblem, tol: float = 1e-10, max_iter: int = 10**6, u0=None, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Damped fixed-point iteration ``u <- u + tau (F(u) - f)``.

    ``tau = 1 / (2 max |diagonal|)`` keeps the update monotone, so the
    iteration is a contraction for the discrete inf-sup operator.
    """
    I = p.operator if isinstance(p.operator, IsaacsOperator) else IsaacsOperator.single(p.operator)
    pts, mask, f, g, gfar = _setup(p, cfg)
    fam = _Family(p, I, g, gfar, pts[mask], cfg)
    return _value_iteration(p, fam, mask, f, g, tol, max_iter, u0)


def _value_iteration(p, fam, mask, f, g, tol, max_iter, u0=None, label="value-iteration"):
    tau = 1.0 / (2.0 * fam.diag_max())
    u = np.zeros(f.size) if u0 is None else u0.copy()
    hist = []
    res = math.inf
    for k in range(1, max_iter + 1):
        r = fam.F(u) - f
        res = float(np.max(np.abs(r)))
        if k % 50 == 1:
            hist.append(res)
        if res <= tol:
            return _report(p, mask, g, u, iterations=k, residual=res, converged=True, method=label, residual_history=hist)
        u = u + tau * r
    return _report(p, mask, g, u, iterations=max_iter, residual=res, converged=False, method=label,
                   residual_history=hist, message="value iteration hit the iteration cap")


def solve_isaacs(p: DirichletProblem, cfg: SolverConfig = SolverConfig(), *, max_outer: int = 100, max_inner: int = 100) -> SolveReport:
    """Solve ``inf_b sup_a (L_ab u + c_ab) = f`` by policy iteration.

    The outer loop fixes the ``b``-policy; for it, Howard's algorithm solves
    the ``sup_a`` problem (one linear solve per policy).  A repeated
    ``b``-policy without convergence counts as a cycle and switches to
    damped value iteration, flagged in the report.
    """
    I = p.operator if isinstance(p.operator, IsaacsOperator) else IsaacsOperator.single(p.operator)
    pts, mask, f, g, gfar = _setup(p, cfg)
    fam = _Family(p, I, g, gfar, pts[mask], cfg)
    m = f.size
    rows = np.arange(m)
    if len(I.A) == 1 and len(I.B) == 1:
        key = (I.A[0], I.B[0])
        A = fam.mats[key]
        b = f - fam.consts[key] - fam.costs[key]
        rep = _solve_policy_system(p, mask, g, A, b, cfg, "policy")
        rep.policy = np.zeros((2, m), dtype=int)
        return rep
    nb = len(I.B)
    bpol = np.zeros(m, dtype=int)
    apol = np.zeros(m, dtype=int)
    u = np.zeros(m)
    switches: list = []
    hist: list = []
    seen = set()
    total = 0

    def solve_for(apol, bpol, u_prev):
        A = np.empty((m, m))
        rhs = np.empty(m)
        for ai, a in enumerate(I.A):
            for bi, b in enumerate(I.B):
                sel = (apol == ai) & (bpol == bi)
                if np.any(sel):
                    A[sel] = fam.mats[(a, b)][sel]
                    rhs[sel] = f[sel] - fam.consts[(a, b)][sel] - fam.costs[(a, b)][sel]
        x, _, _, _ = _linear_solve(A, rhs, cfg, u_prev)
        return x

    for outer in range(max_outer):
        key = bpol.tobytes()
        if key in seen and outer > 0:
            rep = _value_iteration(p, fam, mask, f, g, cfg.tol, cfg.max_iter * 50, u, label="policy+value-iteration")
            rep.fallback = True
            rep.policy_switches = switches
            rep.message = "b-policy cycle detected; value iteration fallback engaged"
            return rep
        seen.add(key)
        # Howard on sup_a with b fixed
        for inner in range(max_inner):
            u = solve_for(apol, bpol, u)
            total += 1
            V = fam.values(u)
            Vb = np.stack([V[I.B[bi]][:, j] for j, bi in enumerate(bpol)], axis=1)
            new_a = _argmax_keep(Vb, apol)
            changed = int(np.sum(new_a != apol))
            switches.append(changed)
            apol = new_a
            if changed == 0:
                break
        V = fam.values(u)
        sup_b = np.stack([V[I.B[bi]].max(axis=0) for bi in range(nb)])
        res = float(np.max(np.abs(sup_b.min(axis=0) - f)))
        hist.append(res)
        new_b = _argmin_keep(sup_b, bpol)
        changed_b = int(np.sum(new_b != bpol))
        switches.append(changed_b)
        if changed_b == 0:
            ok = res <= max(cfg.tol, 1e-9 * (1.0 + float(np.max(np.abs(f)))))
            arg_a = np.stack([V[I.B[bi]].argmax(axis=0) for bi in range(nb)])[bpol, rows]
            rep = _report(p, mask, g, u, iterations=total, residual=res, converged=ok, method=f"policy/{cfg.method}",
                          policy_switches=switches, residual_history=hist)
            rep.policy = np.stack([arg_a, bpol])
            return rep
        bpol = new_b
        apol = np.stack([V[I.B[bi]].argmax(axis=0) for bi in range(nb)])[bpol, rows]
    rep = _value_iteration(p, fam, mask, f, g, cfg.tol, cfg.max_iter * 50, u, label="policy+value-iteration")
    rep.fallback = True
    rep.policy_switches = switches
    rep.message = "outer policy iteration cap reached; value iteration fallback engaged"
    return rep


def solve(p: DirichletProblem, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    if isinstance(p.operator, IsaacsOperator):
        return solve_isaacs(p, cfg)
    return solve_linear(p, cfg)


def convergence_study(p: DirichletProblem, levels: int, cfg: SolverConfig = SolverConfig()) -> list[dict]:
    """Solve on ``h, h/2, ...`` and compare successive solutions on the
    coarsest grid's nodes.

    Returns one row per level: ``h``, ``diff`` (sup-norm difference to the
    previous level, ``nan`` for the first) and ``order`` (``log2`` of the
    ratio of successive differences, ``nan`` until defined).
    """
    if levels < 3:
        raise SolverInputError("convergence_study needs at least 3 levels")
    if not (callable(p.rhs) or np.ndim(p.rhs) == 0) or not (callable(p.exterior) or np.ndim(p.exterior) == 0):
        raise SolverInputError("refinement needs rhs and exterior data given as constants or callables")
    base = p.grid
    coarse_pts = base.points()
    rows = []
    prev = None
    h = base.h
    for k in range(levels):
        grid = Grid(base.lo, base.hi, h)
        rep = solve(p.with_grid(grid), cfg)
        vals = _sample_nodes(rep.solution, coarse_pts)
        diff = math.nan if prev is None else float(np.max(np.abs(vals - prev)))
        rows.append({"level": k, "h": h, "diff": diff, "residual": rep.residual, "converged": rep.converged})
        prev = vals
        h /= 2.0
    for k in range(2, levels):
        d1, d2 = rows[k - 1]["diff"], rows[k]["diff"]
        rows[k]["order"] = math.log2(d1 / d2) if d1 > 0 and d2 > 0 else math.nan
    for r in rows:
        r.setdefault("order", math.nan)
    return rows


def _sample_nodes(u: GridFunction, pts: np.ndarray) -> np.ndarray:
    """Values at points that are nodes of ``u``'s grid (exact lookup)."""
    g = u.grid
    idx = np.rint((pts - np.asarray(g.lo)) / g.h).astype(int)
    return u.values[tuple(idx.T)]
