"""Panel quadrature for one-sided principal-value integrals along a line.

Every nonlocal evaluation in the package reduces to integrals of the form

    I = int_0^inf F(g(r)) k(r) r^(-1-2s) dr,    g(r) = (w(r) + w(-r))/2 - w(0),

where ``w`` is the restriction of a field to a line through the evaluation
point.  The symmetric pairing makes ``g = O(r^2)`` so the integrand is only
weakly singular at the origin.

The integral is split into

* an inner piece ``[0, delta]`` integrated with Gauss-Jacobi nodes for the
  weight ``r^(1-2s)`` applied to ``g(r)/r^2`` (smooth when ``w`` is smooth),
* Gauss-Legendre panels on ``[delta, R]``, graded geometrically toward every
  declared singular point of ``w``,
* a tail ``[R, inf)`` handled in closed form for zero/constant far fields and
  by the substitution ``r = R/t`` with Gauss-Jacobi nodes for power growth.

Each piece is evaluated with two rules of different order; the difference is
returned as the error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_jacobi

# smallest first panel next to a singular point, relative to its location
_MIN_REL = 1e-13


class _EstimateBase(NamedTuple):
    value: float
    error: float


class Estimate(_EstimateBase):
    """A quadrature value together with an estimate of its absolute error."""

    __slots__ = ()

    def __new__(cls, value, error):
        return super().__new__(cls, float(value), float(error))

    def __float__(self) -> float:
        return float(self.value)

    def scaled(self, c: float) -> "Estimate":
        return Estimate(c * self.value, abs(c) * self.error)

    def __add__(self, other):  # type: ignore[override]
        if isinstance(other, Estimate):
            return Estimate(self.value + other.value, self.error + other.error)
        return NotImplemented


@lru_cache(maxsize=None)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi_left(m: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] for the weight ``t**alpha`` (alpha > -1)."""
    x, w = roots_jacobi(m, 0.0, alpha)
    t = 0.5 * (x + 1.0)
    return t, w * 0.5 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def clenshaw_curtis(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes (ascending) and weights on [0, 1] with N+1 points.

    For even ``N`` the rule with ``N/2 + 1`` points uses every other node.
    """
    if N < 2 or N % 2:
        raise ValueError("N must be even and at least 2")
    k = np.arange(N + 1)
    x = -np.cos(np.pi * k / N)
    w = np.zeros(N + 1)
    for j in range(N + 1):
        acc = 1.0
        for m in range(1, N // 2 + 1):
            b = 1.0 if 2 * m == N else 2.0
            acc -= b * np.cos(2 * m * np.pi * j / N) / (4 * m * m - 1)
        c = 1.0 if j in (0, N) else 2.0
        w[j] = c * acc / N
    return 0.5 * (x + 1.0), 0.5 * w


def composite_gauss_legendre(edges: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite rule over consecutive ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(m)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    return (a + h * x).ravel(), (h * w).ravel()


def graded_edges(a: float, b: float, sing_a: bool, sing_b: bool, hmax: float = np.inf) -> list[float]:
    """Panel edges on [a, b] (0 < a < b) graded toward singular endpoints.

    Panels double in length away from a singular endpoint and, away from
    singular endpoints, grow in proportion to ``r`` (so wide ranges are
    covered logarithmically).  No panel is longer than ``hmax``.
    """
    if b <= a:
        return [a, b]
    if sing_b:
        mid = 0.5 * (a + b)
        left = _forward(a, mid, sing_a, hmax)
        right = [-e for e in reversed(_forward(-b, -mid, True, hmax))]
        return left[:-1] + right
    return _forward(a, b, sing_a, hmax)


def _forward(a, b, sing_a, hmax):
    edges = [a]
    cur = a
    if sing_a:
        cur = a + max(_MIN_REL * max(abs(a), b - a), 1e-300)
        edges.append(cur)
    while True:
        step = min(hmax, (cur - a) if sing_a else abs(cur))
        if cur + 1.5 * step >= b:
            break
        cur = cur + step
        edges.append(cur)
    edges.append(b)
    return edges


@dataclass(frozen=True)
class LineTail:
    """Description of a line restriction beyond the last singular point.

    ``kind`` is ``"zero"`` (the symmetric average of ``w`` vanishes beyond
    ``radius``), ``"constant"`` (it equals ``value``), or ``"power"`` (it grows
    like ``r**beta``).
    """

    kind: str = "zero"
    radius: float = 0.0
    value: float = 0.0
    beta: float = 0.0


@dataclass(frozen=True)
class SignSplit:
    """Piecewise-linear transform ``pos * g^+ - neg * g^-`` of the integrand."""

    pos: float
    neg: float

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return np.where(g > 0, self.pos * g, self.neg * g)


def pv_line_integral(
    line: Callable[[np.ndarray], np.ndarray],
    s: float,
    *,
    breaks: Sequence[float] = (),
    kinks: Sequence[float] = (),
    scale: float = np.inf,
    tail: LineTail = LineTail(),
    modulation: Callable[[np.ndarray], np.ndarray] | None = None,
    modulation_far: float = 1.0,
    split: SignSplit | None = None,
    order: int = 16,
    inner: float | None = None,
    far: float | None = None,
) -> Estimate:
    """One-sided PV integral ``int_0^inf F(g(r)) k(r) r^(-1-2s) dr``.

    Parameters
    ----------
    line : callable
        Vectorized restriction ``r -> w(r)`` for real ``r`` of either sign.
    s : float
        Order parameter in (0, 1).
    breaks : sequence of float
        Distances ``|r|`` where ``w(r)`` or ``w(-r)`` is singular (power-type);
        panels are graded toward them.
    kinks : sequence of float
        Distances where the integrand is only piecewise smooth (spline knots,
        jumps of the modulation); panels split there without grading.
    scale : float
        Length over which ``w`` is smooth; caps the panel length.
    tail : LineTail
        Behaviour of ``(w(r) + w(-r))/2`` for ``r`` beyond ``tail.radius``.
    modulation : callable, optional
        Even radial modulation ``k(r)`` of the kernel (rough kernels); it must
        equal ``modulation_far`` beyond its last kink.
    split : SignSplit, optional
        Apply ``pos * g^+ - neg * g^-`` before integrating.
    order : int
        Gauss-Legendre points per panel for the fine rule.
    inner : float, optional
        Upper bound on the radius of the Gauss-Jacobi inner piece.
    far : float, optional
        Lower bound on the radius where the tail treatment starts.

    Returns
    -------
    Estimate
        Value and the fine-minus-coarse difference as an error estimate.
    """
    out = _line_core(line, s, breaks, kinks, scale, tail, modulation, modulation_far, split, order, inner, far, False)
    return out[0]


def pv_line_parts(
    line: Callable[[np.ndarray], np.ndarray],
    s: float,
    *,
    breaks: Sequence[float] = (),
    kinks: Sequence[float] = (),
    scale: float = np.inf,
    tail: LineTail = LineTail(),
    order: int = 16,
    inner: float | None = None,
    far: float | None = None,
) -> tuple[Estimate, Estimate]:
    """Integrals of ``g^+`` and ``g^-`` on one shared panel layout.

    Same arguments as :func:`pv_line_integral`.  Sign changes of ``g`` are
    located and inserted as panel edges, so any combination
    ``a * P - b * N`` is integrated to the accuracy of a smooth integrand.
    """
    out = _line_core(line, s, breaks, kinks, scale, tail, None, 1.0, None, order, inner, far, True)
    return out[0], out[1]


class _Parts:
    """Integrand map ``g -> (g^+, g^-)`` for a shared layout."""

    def __call__(self, g):
        return np.stack([np.maximum(g, 0.0), np.maximum(-g, 0.0)])


def _line_core(line, s, breaks, kinks, scale, tail, modulation, modulation_far, split, order, inner, far, parts):
    w0 = float(line(np.zeros(1))[0])
    brk = _positive_sorted(breaks)
    knk = _positive_sorted(kinks)
    cands = [4.0, scale]
    if brk.size:
        cands.append(brk[0])
    if knk.size:
        cands.append(2.0 * knk[0])
    delta = 0.25 * min(cands)
    if inner is not None:
        delta = min(delta, inner)
    hmax = scale

    def sym(r):
        return 0.5 * (line(r) + line(-r)) - w0

    mod = _unit if modulation is None else modulation
    if parts:
        F = _Parts()
    else:
        F = _identity if split is None else split
    signed = parts or split is not None
    coarse = max(order // 2 + 2, 6)
    radius = tail.radius if far is None else max(tail.radius, far)
    for _attempt in range(8):
        top = max(radius, 4.0 * delta)
        if brk.size:
            top = max(top, 4.0 * brk[-1])
        if knk.size:
            top = max(top, knk[-1] * (1.0 + 1e-12))
        inn = _inner(sym, s, delta, F, mod, order, coarse, signed, w0)
        if inn is None:
            delta *= 0.25
            continue
        tl = _tail(sym, s, top, tail, w0, F, modulation_far, order, coarse, signed)
        if tl is None:
            radius = 4.0 * top
            continue
        edges = _edges(delta, top, brk, knk, hmax)
        if signed:
            roots = _sign_roots(sym, edges, order)
            if roots:
                edges = np.unique(np.concatenate([edges, roots]))
        pan = _panels(sym, s, edges, F, mod, order, coarse)
        tot = [a + b + c for a, b, c in zip(inn, pan, tl)]
        return tot
    raise RuntimeError("line quadrature could not isolate sign changes")


def _positive_sorted(v):
    a = np.unique(np.abs(np.asarray(v, dtype=float).ravel()))
    return a[(a > 0) & np.isfinite(a)]


def _unit(r):
    return np.ones_like(r)


def _identity(g):
    return g


def _pair(fine, crude):
    fine = np.atleast_1d(fine)
    crude = np.atleast_1d(crude)
    return [Estimate(float(a), float(abs(a - b))) for a, b in zip(fine, crude)]


def _mixed(g, w0):
    # values at roundoff level carry no sign information
    floor = 1e3 * np.finfo(float).eps * np.maximum(abs(w0), np.abs(g + w0)) + 1e-13 * np.max(np.abs(g))
    return bool(np.any(g > floor) and np.any(g < -floor))


def _inner(sym, s, delta, F, mod, order, coarse, signed, w0=0.0):
    alpha = 1.0 - 2.0 * s
    out = []
    for m in (order, coarse):
        t, w = gauss_jacobi_left(m, alpha)
        r = delta * t
        g = sym(r)
        h = g / r**2
        if signed and _mixed(g, w0):
            return None
        out.append(delta ** (2.0 - 2.0 * s) * np.sum(w * F(h) * mod(r), axis=-1))
    return _pair(*out)


def _edges(delta, top, brk, knk, hmax):
    pts = {delta: False, top: False}
    for k in knk:
        if delta < k < top:
            pts[float(k)] = False
    for b in brk:
        if delta < b < top:
            pts[float(b)] = True
    keys = sorted(pts)
    edges: list[float] = [keys[0]]
    for a, b in zip(keys[:-1], keys[1:]):
        edges.extend(graded_edges(a, b, pts[a], pts[b], hmax)[1:])
    return np.asarray(edges)


def _panels(sym, s, edges, F, mod, order, coarse):
    res = []
    for m in (order, coarse):
        r, w = composite_gauss_legendre(edges, m)
        res.append(np.sum(w * F(sym(r)) * mod(r) * r ** (-1.0 - 2.0 * s), axis=-1))
    return _pair(*res)


def _sign_roots(sym, edges, order):
    r, _ = composite_gauss_legendre(edges, order)
    r = np.sort(np.concatenate([r, edges]))
    g = sym(r)
    idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
    roots = []
    for i in idx:
        roots.append(brentq(lambda t: float(sym(np.array([t]))[0]), r[i], r[i + 1], xtol=1e-15 * r[i], rtol=1e-15))
    return roots


def _tail(sym, s, R, tail, w0, F, kfar, order, coarse, signed):
    if tail.kind in ("zero", "constant"):
        g = (tail.value if tail.kind == "constant" else 0.0) - w0
        val = np.atleast_1d(F(np.array([g]))[..., 0]) * kfar * R ** (-2.0 * s) / (2.0 * s)
        return [Estimate(float(v), 1e-15 * abs(float(v))) for v in val]
    # power growth: r = R/t turns the tail into a Jacobi-weighted integral on [0, 1]
    beta = tail.beta
    alpha = 2.0 * s - 1.0 - beta
    vals = []
    for m in (order, coarse):
        t, w = gauss_jacobi_left(m, alpha)
        g = sym(R / t)
        if signed and np.any(g > 0) and np.any(g < 0):
            return None
        S = g + w0
        base = R ** (-2.0 * s) * float(np.sum(w * t**beta * S)) - w0 * R ** (-2.0 * s) / (2.0 * s)
        # on a one-signed tail F acts linearly: F(base) is exact
        vals.append(kfar * np.atleast_1d(F(np.array([base]))[..., 0]))
    return _pair(*vals)
