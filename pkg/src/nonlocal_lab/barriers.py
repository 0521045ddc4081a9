"""Radial barrier profiles around the unit ball and their sampled verification.

The four distance powers ``phi1..phi4`` and the two calibrated barriers
(a supersolution outside ``B_1`` and a subsolution inside) are radial fields.
Verification evaluates the relevant extremal operator on a declared finite
sample of points and reports every inequality with its quadrature error.
The calibrated constants are artifacts of this sampling, not universal
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._parallel import pmap
from .core import RadialField
from .operators import EllipticityBounds, pucci_all
from .quadrature import Estimate, LineTail
from .spectral import SphereRule, aligned_rule

__all__ = [
    "BarrierProfile",
    "VerificationReport",
    "eval_barrier",
    "barrier_field",
    "verify_barrier",
    "calibrate_supersolution",
    "calibrate_subsolution",
    "dyadic_sample",
    "kink_check",
    "CalibrationFailure",
]

KINDS = (
    "phi1_dist_pow_s_out",
    "phi2_dist_pow_s_in",
    "phi3_dist_pow_3s2_out",
    "phi4_dist_pow_3s2_in",
    "supersolution_phi1",
    "subsolution_phi2",
)


class CalibrationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class BarrierProfile:
    """A radial barrier.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    s : float
        Order.
    eps : float
        Annulus width on which the calibrated inequality holds.
    C : float
        Amplitude (supersolution) or rescaling base (subsolution).
    c : float
        Final scale of the subsolution (``phi2 = c * Psi``) or the reported
        lower constant.
    N : int
        Number of rescalings in the subsolution's finite max.
    n : int
        Dimension.
    """

    kind: str
    s: float
    eps: float = 0.0
    C: float = 1.0
    c: float = 1.0
    N: int = 8
    n: int = 2
    constants: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")


def _pos(t, p):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.abs(t) ** p, 0.0)


def _psi_super(rho, s):
    d = np.asarray(rho, dtype=float) - 1.0
    inner = 2.0 * _pos(d, s) - _pos(d, 1.5 * s)
    return np.where(np.asarray(rho) >= 2.0, 1.0, inner)


def _psi_sub(rho, s):
    d = 1.0 - np.asarray(rho, dtype=float)
    return _pos(d, s) + _pos(d, 1.5 * s)


def _Psi(rho, s, C, N):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    for k in range(N + 1):
        out = np.maximum(out, C**k * _psi_sub(2.0 ** (k / N) * rho, s))
    return out


def eval_barrier(b: BarrierProfile, x) -> np.ndarray | float:
    """Closed-form value of the barrier at ``x`` (points along the last axis)."""
    X = np.asarray(x, dtype=float)
    rho = np.linalg.norm(X, axis=-1) if X.ndim else abs(float(X))
    out = _radial_profile(b)(rho)
    return float(out) if np.ndim(out) == 0 else out


def _radial_profile(b: BarrierProfile):
    s = b.s
    if b.kind == "phi1_dist_pow_s_out":
        return lambda r: _pos(np.asarray(r) - 1.0, s)
    if b.kind == "phi2_dist_pow_s_in":
        return lambda r: _pos(1.0 - np.asarray(r), s)
    if b.kind == "phi3_dist_pow_3s2_out":
        return lambda r: _pos(np.asarray(r) - 1.0, 1.5 * s)
    if b.kind == "phi4_dist_pow_3s2_in":
        return lambda r: _pos(1.0 - np.asarray(r), 1.5 * s)
    if b.kind == "supersolution_phi1":
        return lambda r: b.C * _psi_super(r, s)
    return lambda r: b.c * _Psi(r, s, b.C, b.N)


def _singular_radii(b: BarrierProfile) -> tuple:
    if b.kind == "supersolution_phi1":
        return (1.0, 2.0)
    if b.kind == "subsolution_phi2":
        r0 = 1.0 - b.eps
        ks = range(b.N + 1)
        return tuple(sorted({2.0 ** (-k / b.N) for k in ks} | {r0 * 2.0 ** (-k / b.N) for k in ks}))
    return (1.0,)


def barrier_field(b: BarrierProfile) -> RadialField:
    """The barrier as a field the operators can act on."""
    s = b.s
    if b.kind in ("phi1_dist_pow_s_out", "phi3_dist_pow_3s2_out"):
        beta = s if b.kind.startswith("phi1") else 1.5 * s
        tail = LineTail("power", 2.0, 0.0, beta)
    elif b.kind == "supersolution_phi1":
        tail = LineTail("constant", 2.0, b.C)
    else:
        tail = LineTail("zero", 1.0)
    return RadialField(_radial_profile(b), b.n, _singular_radii(b), tail)


def _rule_at(b: BarrierProfile, x: np.ndarray, nearest: int = 2) -> SphereRule:
    # refine only around the kink spheres closest to |x|; farther kinks are
    # resolved by the line panels and show up in the error estimate
    radii = np.array(_singular_radii(b))
    if radii.size > nearest:
        r = float(np.linalg.norm(x))
        radii = radii[np.argsort(np.abs(radii - r), kind="stable")[:nearest]]
    return aligned_rule(x, tuple(float(v) for v in radii))


# ---------------------------------------------------------------- verification


@dataclass(frozen=True)
class VerificationRow:
    point: tuple
    inequality: str
    lhs: float
    rhs: float
    margin: float
    error: float
    status: str  # "pass", "fail" or "rejected"


@dataclass
class VerificationReport:
    kind: str
    rows: list
    constants: dict

    @property
    def passed(self) -> bool:
        checked = [r for r in self.rows if r.status != "rejected"]
        return bool(checked) and all(r.status == "pass" for r in checked)

    @property
    def rejected(self) -> list:
        return [r for r in self.rows if r.status == "rejected"]


def _region(b: BarrierProfile) -> tuple[float, float]:
    if b.kind in ("phi1_dist_pow_s_out", "phi3_dist_pow_3s2_out"):
        return 1.0, 2.0
    if b.kind == "supersolution_phi1":
        return 1.0, 1.0 + b.eps
    return 0.5, 1.0


def _boundary_distance(b: BarrierProfile, r: float) -> float:
    return r - 1.0 if r > 1.0 else 1.0 - r


def dyadic_sample(b: BarrierProfile, count: int = 20, seed: int = 0, smallest: float = 1e-3) -> np.ndarray:
    """Points at geometrically decreasing distance to the unit sphere inside
    the barrier's region, at random angles (fixed seed)."""
    lo, hi = _region(b)
    width = hi - lo
    d_max = 0.95 * width
    d_min = min(smallest, 0.5 * d_max)
    d = d_max * (d_min / d_max) ** (np.arange(count) / max(count - 1, 1))
    outside = b.kind in ("phi1_dist_pow_s_out", "phi3_dist_pow_3s2_out", "supersolution_phi1")
    r = 1.0 + d if outside else 1.0 - d
    rng = np.random.default_rng(seed)
    if b.n == 1:
        sgn = np.where(rng.random(count) < 0.5, -1.0, 1.0)
        return (sgn * r)[:, None]
    a = rng.uniform(0, 2 * np.pi, count)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def _operator_values(b: BarrierProfile, bounds: EllipticityBounds, pts: np.ndarray, rule=None):
    u = barrier_field(b)

    def one(x):
        rr = rule if (b.n == 1 or rule is not None) else _rule_at(b, x)
        return pucci_all(u, x, bounds, rr)

    return pmap(one, list(pts))


def verify_barrier(
    b: BarrierProfile, bounds: EllipticityBounds, sample: Sequence | None = None, *, tol: float = 1e-6
) -> VerificationReport:
    """Evaluate the barrier's inequality at each sample point.

    Inequalities (``d`` is the distance to the unit sphere):

    * ``phi1``: ``M^- phi1 >= 0`` on ``1 < |x| < 2``
    * ``phi2``: ``M^+ phi2 <= 0`` on ``1/2 < |x| < 1``
    * ``phi3``: ``M^- phi3 * d^(s/2) >= c > 0`` on ``1 < |x| < 2``
    * ``phi4``: ``M^- phi4 >= c d^(-s/2) - C`` on ``1/2 < |x| < 1``
    * ``supersolution_phi1``: ``M^+ <= -1`` on ``1 < |x| < 1 + eps``
    * ``subsolution_phi2``: ``M^- >= c > 0`` on ``1/2 < |x| < 1``

    ``tol`` is the slack allowed on the sign inequalities (zero right-hand
    sides).  Points outside the region are reported as rejected.
    """
    if bounds.s != b.s:
        bounds = EllipticityBounds(bounds.lam, bounds.Lam, b.s)
    pts = dyadic_sample(b) if sample is None else np.atleast_2d(np.asarray(sample, dtype=float))
    lo, hi = _region(b)
    r = np.linalg.norm(pts, axis=-1)
    ok = (r > lo) & (r < hi)
    vals = _operator_values(b, bounds, pts[ok]) if np.any(ok) else []
    it = iter(vals)
    rows: list = []
    raw = []
    for x, rr, good in zip(pts, r, ok):
        if not good:
            rows.append(VerificationRow(tuple(map(float, x)), b.kind, math.nan, math.nan, math.nan, math.nan, "rejected"))
            continue
        pv = next(it)
        raw.append((x, rr, pv))
    s = b.s
    consts: dict = {}
    if b.kind == "phi1_dist_pow_s_out":
        for x, rr, pv in raw:
            v = pv.star_minus
            rows.append(_row(x, "M-phi1>=0", v, 0.0, v.value + tol))
        consts["log_slope_C"] = _log_bound(raw, s)
    elif b.kind == "phi2_dist_pow_s_in":
        for x, rr, pv in raw:
            v = pv.star_plus
            rows.append(_row(x, "M+phi2<=0", v, 0.0, tol - v.value))
    elif b.kind == "phi3_dist_pow_3s2_out":
        scaled = [pv.star_minus.value * (rr - 1.0) ** (s / 2) for x, rr, pv in raw]
        c = min(scaled) if scaled else math.nan
        consts["c"] = c
        for (x, rr, pv), v in zip(raw, scaled):
            rows.append(_row(x, "M-phi3*d^(s/2)>=c>0", Estimate(v, pv.star_minus.error * (rr - 1.0) ** (s / 2)), 0.0, v))
    elif b.kind == "phi4_dist_pow_3s2_in":
        d = np.array([1.0 - rr for _, rr, _ in raw])
        m = np.array([pv.star_minus.value for _, _, pv in raw])
        A = np.stack([d ** (-s / 2), -np.ones_like(d)], axis=-1)
        coef, *_ = np.linalg.lstsq(A, m, rcond=None)
        C_fit = max(float(coef[1]), 0.0)
        if np.any(m + C_fit <= 0):
            # a tight fit leaves c = 0; doubling the worst deficit keeps c > 0
            C_fit = 2.0 * float(np.max(-m))
        c_low = float(np.min((m + C_fit) * d ** (s / 2)))
        consts.update(c=c_low, C=C_fit)
        for (x, rr, pv), di in zip(raw, d):
            rhs = c_low * di ** (-s / 2) - C_fit
            rows.append(_row(x, "M-phi4>=c*d^(-s/2)-C", pv.star_minus, rhs, pv.star_minus.value - rhs + tol if c_low > 0 else -1.0))
    elif b.kind == "supersolution_phi1":
        for x, rr, pv in raw:
            v = pv.star_plus
            rows.append(_row(x, "M+phi1<=-1", v, -1.0, -1.0 - v.value))
        consts.update(eps=b.eps, C=b.C)
    else:
        vals_ = [pv.star_minus.value for _, _, pv in raw]
        c = min(vals_) if vals_ else math.nan
        consts.update(c=c, eps=b.eps, C=b.C, N=b.N, scale=b.c)
        for x, rr, pv in raw:
            rows.append(_row(x, "M-phi2>=c>0", pv.star_minus, 0.0, pv.star_minus.value))
    return VerificationReport(b.kind, rows, consts)


def _row(x, ineq, est: Estimate, rhs: float, margin: float) -> VerificationRow:
    status = "pass" if margin >= 0 else "fail"
    return VerificationRow(tuple(map(float, x)), ineq, float(est.value), float(rhs), float(margin), float(est.error), status)


def _log_bound(raw, s) -> float:
    """Smallest C with M^+ phi1 <= C (1 + (1-s)|log d|) over the sample."""
    if not raw:
        return math.nan
    return max(pv.star_plus.value / (1.0 + (1.0 - s) * abs(math.log(rr - 1.0))) for _, rr, pv in raw)


# ---------------------------------------------------------------- calibration


def _axis_points(rhos: np.ndarray, n: int) -> np.ndarray:
    pts = np.zeros((rhos.size, n))
    pts[:, -1] = rhos
    return pts


def calibrate_supersolution(
    s: float, bounds: EllipticityBounds, *, eps_min: float = 1e-3, per_level: int = 4
) -> BarrierProfile:
    """Find a dyadic ``eps`` with ``M^+ psi <= -1`` sampled on ``(1, 1 + eps)``.

    ``psi = 2 phi1 - phi3`` in ``B_2`` and ``1`` outside.  Candidates
    ``eps = 1/2, 1/4, ...`` are tried in order; for each, ``M^+ psi`` is
    evaluated at ``per_level`` radii per dyadic shell down to ``eps_min``.
    The amplitude is ``C = max(1, 1/psi(1 + eps))`` so the barrier is at
    least 1 outside ``B_{1+eps}`` (``psi`` increases with ``|x|``).
    """
    if not 0 < s <= 0.95:
        raise ValueError("s must lie in (0, 0.95]")
    bounds = EllipticityBounds(bounds.lam, bounds.Lam, s)
    proto = BarrierProfile("supersolution_phi1", s, eps=0.5, C=1.0)
    levels = int(math.ceil(math.log2(0.5 / eps_min)))
    d = 0.5 * 2.0 ** (-np.arange(0, levels * per_level + 1) / per_level)
    d = d[d >= eps_min * (1 - 1e-12)]
    vals = np.array([pv.star_plus.value for pv in _operator_values(proto, bounds, _axis_points(1.0 + d, proto.n))])
    eps = 0.5
    while eps >= eps_min * (1 - 1e-12):
        inside = d < eps * (1 + 1e-12)
        if np.all(vals[inside] <= -1.0):
            C = max(1.0, 1.0 / float(_psi_super(1.0 + eps, s)))
            return replace(proto, eps=eps, C=C, constants={"eps": eps, "C": C, "sampled_max": float(vals[inside].max())})
        eps *= 0.5
    raise CalibrationFailure(f"no eps >= {eps_min} with sampled M+ psi <= -1")


def calibrate_subsolution(
    s: float,
    bounds: EllipticityBounds,
    *,
    eps_min: float = 1e-3,
    per_level: int = 1,
    N: int = 8,
    C_start: float = 1.5,
    C_max: float = 2.0**20,
) -> BarrierProfile:
    """Calibrate the finite-max subsolution inside ``B_1``.

    1. ``psi = phi2 + phi4``: the largest dyadic ``eps`` with ``M^- psi >= 1``
       sampled on ``(1 - eps, 1)`` is recorded.
    2. With ``N`` fixed, the base ``C`` of ``Psi = max_k C^k psi(2^(k/N) x)``
       is doubled from ``C_start`` until ``M^- Psi - error > 0`` at every
       calibration radius in ``(1/2, 1)``: the rescaled inner pieces carry
       enough mass to compensate where ``M^- psi`` alone is negative.
    3. Scale by ``c = 1 / max Psi = 1 / (2 C^N)`` so the barrier is at most 1.

    ``constants['c_lower']`` is the sampled minimum of ``M^- (c Psi)`` from
    the verification on the annulus ``1/2 < |x| < 1``.
    """
    if not 0 < s <= 0.95:
        raise ValueError("s must lie in (0, 0.95]")
    if N < 1:
        raise ValueError("N must be a positive integer")
    bounds = EllipticityBounds(bounds.lam, bounds.Lam, s)
    proto = BarrierProfile("phi2_dist_pow_s_in", s)
    levels = int(math.ceil(math.log2(0.5 / eps_min)))
    d = 0.5 * 2.0 ** (-np.arange(0, levels * per_level + 1) / per_level)
    d = d[(d >= eps_min * (1 - 1e-12)) & (d < 0.5)]
    psi_field = RadialField(lambda r: _psi_sub(r, s), proto.n, (1.0,), LineTail("zero", 1.0))
    pts = _axis_points(1.0 - d, proto.n)

    def one(x):
        rule = _rule_at(proto, x) if proto.n == 2 else None
        return pucci_all(psi_field, x, bounds, rule).star_minus.value

    vals = np.array(pmap(one, list(pts)))
    eps = 0.5
    while eps >= eps_min * (1 - 1e-12):
        if np.all(vals[d < eps * (1 + 1e-12)] >= 1.0):
            break
        eps *= 0.5
    else:
        raise CalibrationFailure(f"no eps >= {eps_min} with sampled M- psi >= 1")

    C = C_start
    while C <= C_max:
        trial = BarrierProfile("subsolution_phi2", s, eps=eps, C=C, c=1.0, N=N, n=proto.n)
        est = [pv.star_minus for pv in _operator_values(trial, bounds, pts)]
        if all(e.value - e.error > 0 for e in est):
            break
        C *= 2.0
    else:
        raise CalibrationFailure(f"no C <= {C_max} with sampled M- Psi > 0")
    c = 1.0 / (2.0 * C**N)
    out = BarrierProfile("subsolution_phi2", s, eps=eps, C=C, c=c, N=N)
    rep = verify_barrier(out, bounds)
    c_op = rep.constants["c"]
    consts = {"eps": eps, "C": C, "N": N, "scale": c, "min_M_minus": c_op, "c_lower": c_op}
    return replace(out, constants=consts)


def _switch_radii(b: BarrierProfile, m: int = 4001) -> list[float]:
    """Radii in ``(1/2, 1)`` where the maximizing piece of ``Psi`` changes."""
    s, C, N = b.s, b.C, b.N

    def piece(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        vals = np.stack([C**k * _psi_sub(2.0 ** (k / N) * r, s) for k in range(N + 1)])
        return np.where(vals.max(axis=0) > 0, vals.argmax(axis=0), -1)

    r = np.linspace(0.5, 1.0, m)[1:-1]
    idx = piece(r)
    out = []
    for i in np.nonzero((idx[1:] != idx[:-1]) & (idx[1:] >= 0) & (idx[:-1] >= 0))[0]:
        lo, hi = r[i], r[i + 1]
        k_lo = idx[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if piece(mid)[0] == k_lo:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return out


def kink_check(b: BarrierProfile, radii: Sequence[float] | None = None, h: float = 1e-7) -> list[tuple[float, float, float]]:
    """One-sided radial slopes at candidate kinks.

    Returns ``(r, left_slope, right_slope)``; a max of smooth pieces has
    ``right_slope >= left_slope`` (no downward kink).
    """
    prof = _radial_profile(b)
    if radii is None:
        radii = _switch_radii(b) if b.kind == "subsolution_phi2" else list(_singular_radii(b))
    out = []
    for r in radii:
        f0 = float(prof(np.array(r)))
        left = (f0 - float(prof(np.array(r - h)))) / h
        right = (float(prof(np.array(r + h))) - f0) / h
        out.append((float(r), left, right))
    return out
