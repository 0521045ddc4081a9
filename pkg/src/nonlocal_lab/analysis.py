"""Boundary-behaviour measurements: u/d^s, dyadic oscillation decay, Hoelder fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .core import Domain, GridFunction, PowerProfile, RadialField, _blend, distance_function
from .operators import KernelSpec, _power_rule, eval_linear
from .quadrature import LineTail
from .spectral import aligned_rule

__all__ = [
    "QuotientField",
    "ExponentFit",
    "quotient",
    "oscillation_decay",
    "holder_fit",
    "lds_regularity_check",
    "LdsReport",
]


@dataclass(frozen=True, eq=False)
class QuotientField:
    """``u / d^s`` at grid nodes; ``mask`` marks the nodes kept (``d > band``)."""

    points: np.ndarray
    values: np.ndarray  # nan where masked
    mask: np.ndarray
    band: float
    s: float
    domain: Domain

    @property
    def kept(self) -> int:
        return int(self.mask.sum())


def quotient(u: GridFunction, domain: Domain, s: float, band: float | None = None) -> QuotientField:
    """Nodewise ``u / d^s`` with ``d = distance_function(domain, .)``.

    Nodes with ``d <= band`` (default one grid step) are masked: there the
    quotient is dominated by interpolation error.
    """
    pts = u.grid.points()
    d = np.asarray(distance_function(domain, pts), dtype=float).reshape(-1)
    band = u.grid.h if band is None else float(band)
    mask = d > band
    vals = np.full(d.shape, np.nan)
    vals[mask] = u.values.ravel()[mask] / d[mask] ** s
    return QuotientField(pts, vals, mask, band, s, domain)


@dataclass
class ExponentFit:
    """Dyadic best-fit residuals around a boundary anchor.

    ``alpha`` is the log-log slope of residual oscillation against radius;
    ``exact`` flags residuals that vanish to roundoff (then ``alpha`` is
    ``inf`` and should be printed as the flag, not a number).
    """

    anchor: tuple
    degree: int
    radii: list
    residuals: list
    coefficients: list
    alpha: float
    r2: float
    exact: bool
    K_requested: int
    K_used: int
    counts: list = field(default_factory=list)
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "anchor": list(self.anchor),
            "degree": self.degree,
            "alpha": None if self.exact else self.alpha,
            "r2": None if self.exact else self.r2,
            "exact": self.exact,
            "k_requested": self.K_requested,
            "k_used": self.K_used,
            "note": self.note,
        }


def _design(X: np.ndarray, z: np.ndarray, degree: int) -> np.ndarray:
    if degree == 0:
        return np.ones((len(X), 1))
    return np.concatenate([np.ones((len(X), 1)), X - z], axis=1)


def _fit_ball(q: QuotientField, z, r, degree):
    sel = q.mask & (np.linalg.norm(q.points - z, axis=-1) < r)
    X = q.points[sel]
    y = q.values[sel]
    A = _design(X, z, degree)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return coef, res, int(sel.sum()), A


def oscillation_decay(q: QuotientField, z, K: int, degree: int = 0, *, ratio: float = 4.0, min_nodes: int = 10, h: float | None = None) -> ExponentFit:
    """Best-fit residual oscillation on the balls ``B_{r_k}(z)``, ``r_k = ratio^-k``.

    For each ``k = 1..K`` the degree-``degree`` least-squares polynomial of
    the quotient over kept nodes in the ball is computed; the residual
    oscillation is ``max(res) - min(res)``.  ``alpha`` is the slope of
    ``log(residual)`` against ``log(r_k)`` over ``k = 2..K`` (the largest
    ball is dropped).  ``K`` is reduced while the smallest ball holds fewer
    than ``min_nodes`` kept nodes or ``r_K < 4h``; the reduction is reported.
    """
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    if not ratio > 1:
        raise ValueError("radius ratio must exceed 1")
    z = np.asarray(z, dtype=float).reshape(-1)
    if abs(float(q.domain.exact_distance(z[None, :] if z.size > 1 else z)[0])) > 1e-9:
        raise ValueError("anchor must lie on the domain boundary")
    notes = []
    K_used = K
    if h is not None:
        while K_used > 0 and ratio ** (-K_used) < 4 * h:
            K_used -= 1
    while K_used > 0:
        sel = q.mask & (np.linalg.norm(q.points - z, axis=-1) < ratio ** (-K_used))
        if sel.sum() >= min_nodes:
            break
        K_used -= 1
    if K_used < K:
        notes.append(f"K reduced from {K} to {K_used}")
    radii, res, coefs, counts = [], [], [], []
    for k in range(1, K_used + 1):
        r = ratio ** (-k)
        c, rr, m, _ = _fit_ball(q, z, r, degree)
        radii.append(r)
        res.append(float(rr.max() - rr.min()) if m else math.nan)
        coefs.append(c.tolist())
        counts.append(m)
    scale = max(1.0, float(np.nanmax(np.abs(q.values))) if q.kept else 1.0)
    resid = np.asarray(res)
    if resid.size and np.all(resid <= 1e-10 * scale):
        return ExponentFit(tuple(z), degree, radii, res, coefs, math.inf, 1.0, True, K, K_used, counts, "; ".join(notes))
    use = slice(1, None) if len(radii) >= 3 else slice(0, None)
    lr, ly = np.log(radii)[use], np.log(np.maximum(resid[use], 1e-300))
    if lr.size < 2:
        notes.append("too few radii for a regression")
        return ExponentFit(tuple(z), degree, radii, res, coefs, math.nan, math.nan, False, K, K_used, counts, "; ".join(notes))
    slope, icpt = np.polyfit(lr, ly, 1)
    pred = slope * lr + icpt
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss if ss > 0 else 1.0
    return ExponentFit(tuple(z), degree, radii, res, coefs, float(slope), r2, False, K, K_used, counts, "; ".join(notes))


def holder_fit(values, points, bins=None, *, max_pairs: int = 200_000, seed: int = 0) -> float:
    """Hoelder exponent as the log-log slope of the largest difference per
    distance bin.

    Parameters
    ----------
    values, points : array_like
        Field values and their coordinates (``(m,)`` or ``(m, n)``).
    bins : array_like, optional
        Distance bin edges; default 12 geometric bins between the smallest
        and a quarter of the largest pair distance.

    Returns
    -------
    float
        Raw slope (not capped at 1); ``inf`` for a constant field.
    """
    f = np.asarray(values, dtype=float).reshape(-1)
    P = np.asarray(points, dtype=float)
    P = P.reshape(len(f), -1)
    ok = np.isfinite(f)
    f, P = f[ok], P[ok]
    m = len(f)
    if m * (m - 1) // 2 < 100:
        raise ValueError("holder_fit needs at least 100 node pairs")
    if np.ptp(f) <= 1e-14 * max(1.0, float(np.max(np.abs(f)))):
        return math.inf
    if m * (m - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(m, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, m, max_pairs)
        j = rng.integers(0, m, max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    dist = np.linalg.norm(P[i] - P[j], axis=-1)
    diff = np.abs(f[i] - f[j])
    if bins is None:
        lo = float(dist[dist > 0].min())
        hi = float(dist.max()) / 4.0
        if hi <= lo:
            hi = float(dist.max())
        bins = np.geomspace(lo * (1 - 1e-9), hi, 13)
    bins = np.asarray(bins, dtype=float)
    xs, ys = [], []
    for a, b in zip(bins[:-1], bins[1:]):
        sel = (dist >= a) & (dist < b)
        if np.any(sel) and diff[sel].max() > 0:
            xs.append(math.sqrt(a * b))
            ys.append(diff[sel].max())
    if len(xs) < 2:
        return math.inf
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


@dataclass
class LdsReport:
    distances: list
    values: list
    errors: list
    sup_norm: float
    holder_exponent: float
    points: list


def _ball_distance_power(domain: Domain, s: float) -> RadialField:
    band = domain.boundary_band
    R = domain.radius[0]

    def prof(rho):
        t = R - np.asarray(rho, dtype=float)
        d = np.where(t > 0, _blend(np.maximum(t, 0.0), band), 0.0)
        return d**s

    return RadialField(prof, domain.n, (R,), LineTail("zero", R), band, tuple(domain.center))


def lds_regularity_check(L: KernelSpec, domain: Domain, *, distances=None, count: int = 24, half_space: bool = False) -> LdsReport:
    """Evaluate ``L(d^s)`` at interior points approaching the boundary.

    For a ball the points lie on one ray at geometric distances to the
    sphere; ``half_space=True`` uses ``(x_n)_+^s`` instead (the exact
    solution, expected to give 0).  Reports the values, their sup-norm and
    the Hoelder exponent of the sampled field.
    """
    s = L.s
    n = L.n
    if distances is None:
        distances = np.geomspace(0.2, 0.005, count)
    distances = np.asarray(distances, dtype=float)
    if half_space:
        u = PowerProfile(tuple([0.0] * (n - 1) + [1.0]), s)
        pts = np.zeros((distances.size, n))
        pts[:, -1] = distances
        route_rule = None
    else:
        if domain.kind != "ball":
            raise ValueError("lds_regularity_check expects a ball domain")
        u = _ball_distance_power(domain, s)
        c = np.asarray(domain.center)
        R = domain.radius[0]
        pts = np.zeros((distances.size, n))
        pts[:, -1] = R - distances
        pts += c
        route_rule = True

    def one(x):
        rule = aligned_rule(x - np.asarray(domain.center), (domain.radius[0],)) if (route_rule and n == 2) else None
        if half_space and n == 2:
            rule = _power_rule(2)
        return eval_linear(L, u, x, route="polar", rule=rule)

    est = pmap(one, list(pts))
    vals = [e.value for e in est]
    errs = [e.error for e in est]
    sup = float(np.max(np.abs(vals)))
    try:
        hx = holder_fit(vals, pts)
    except ValueError:
        hx = math.nan
    return LdsReport(distances.tolist(), vals, errs, sup, hx, pts.tolist())
