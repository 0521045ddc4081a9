"""Spectral measures on the unit sphere and direction quadrature.

Measures are even by construction: a direction and its negation are mapped
to the same canonical representative before evaluation, so ``mu(theta)`` and
``mu(-theta)`` agree bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quadrature import Estimate, clenshaw_curtis

__all__ = [
    "SpectralMeasure",
    "SphereRule",
    "sphere_rule",
    "graded_sphere_rule",
    "directional_weight",
    "rotated_rule",
    "aligned_rule",
    "read_measure_table",
    "write_measure_table",
]

_KINDS = ("constant", "trig_polynomial", "smoothed_indicator", "tabulated")


def canonical_angle(theta: np.ndarray) -> np.ndarray:
    """Angle in [0, pi) of the line spanned by each unit vector in the plane."""
    theta = np.asarray(theta, dtype=float)
    x, y = theta[..., 0], theta[..., 1]
    flip = (y < 0) | ((y == 0) & (x < 0))
    x = np.where(flip, -x, x)
    y = np.where(flip, -y, y)
    t = np.arctan2(y, x)
    return np.where(t >= np.pi, 0.0, t)


def _axial_distance(t: np.ndarray, t0: float) -> np.ndarray:
    """Angle between the lines at angles t and t0, in [0, pi/2]."""
    d = np.mod(t - t0, np.pi)
    return np.minimum(d, np.pi - d)


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Even density on the unit sphere with ``lam <= mu <= Lam``.

    Parameters
    ----------
    kind : str
        ``constant`` (``value``), ``trig_polynomial`` (``coeffs`` of
        ``a0 + sum_k a_k cos(2 k t) + b_k sin(2 k t)`` given as
        ``[a0, a1, b1, a2, b2, ...]``), ``smoothed_indicator`` (``axis`` angle,
        half-width ``width``, exponent ``gamma``: ``lam + (Lam - lam) *
        (1 - (d/width)^2)_+^(1+gamma)`` with ``d`` the axial angular distance),
        or ``tabulated`` (``angles``/``values`` on [0, pi), linearly
        interpolated with period pi).
    lam, Lam : float
        Ellipticity bounds, validated on a fine sample of directions.
    dim : int
        Dimension of the ambient space (1 or 2).
    """

    kind: str
    lam: float
    Lam: float
    params: dict = field(default_factory=dict)
    dim: int = 2

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if not 0 < self.lam <= self.Lam:
            raise ValueError("ellipticity bounds must satisfy 0 < lam <= Lam")
        if self.dim not in (1, 2):
            raise ValueError("only n = 1, 2 are supported")
        p = dict(self.params)
        if self.kind == "constant":
            p.setdefault("value", self.lam)
        elif self.kind == "trig_polynomial":
            p["coeffs"] = tuple(float(c) for c in p.get("coeffs", (self.lam,)))
            if len(p["coeffs"]) % 2 == 0:
                raise ValueError("trig coefficients must be [a0, a1, b1, ...]")
        elif self.kind == "smoothed_indicator":
            p.setdefault("axis", math.pi / 2)
            p.setdefault("width", math.pi / 4)
            p.setdefault("gamma", 0.5)
            if not 0 < p["width"] <= math.pi / 2:
                raise ValueError("cap width must lie in (0, pi/2]")
        else:
            ang, val = _symmetrize_table(p["angles"], p["values"])
            p["angles"], p["values"] = ang, val
        object.__setattr__(self, "params", p)
        probe = _probe_directions(self.dim)
        vals = self(probe)
        tol = 1e-12 * self.Lam
        if np.any(vals < self.lam - tol) or np.any(vals > self.Lam + tol):
            raise ValueError("measure violates lam <= mu <= Lam")

    @classmethod
    def constant(cls, value: float, lam: float | None = None, Lam: float | None = None, dim: int = 2):
        return cls("constant", value if lam is None else lam, value if Lam is None else Lam, {"value": value}, dim)

    def _on_angle(self, t: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "constant":
            return np.full(t.shape, float(p["value"]))
        if self.kind == "trig_polynomial":
            c = p["coeffs"]
            out = np.full(t.shape, c[0])
            for k in range(1, (len(c) - 1) // 2 + 1):
                out = out + c[2 * k - 1] * np.cos(2 * k * t) + c[2 * k] * np.sin(2 * k * t)
            return out
        if self.kind == "smoothed_indicator":
            d = _axial_distance(t, p["axis"])
            bump = np.maximum(1.0 - (d / p["width"]) ** 2, 0.0) ** (1.0 + p["gamma"])
            return self.lam + (self.Lam - self.lam) * bump
        ang, val = p["angles"], p["values"]
        return np.interp(t, ang, val, period=np.pi)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.dim == 1:
            t = np.zeros(theta.shape[:-1])
        else:
            t = canonical_angle(theta)
        return self._on_angle(t)

    def kink_angles(self) -> tuple:
        """Angles in [0, pi) where the density is not smooth."""
        p = self.params
        if self.kind == "smoothed_indicator":
            a, w = p["axis"], p["width"]
            return tuple(sorted({float(np.mod(a - w, np.pi)), float(np.mod(a + w, np.pi))}))
        if self.kind == "tabulated":
            return tuple(float(a) for a in p["angles"])
        return ()

    def scaled(self, c: float) -> "SpectralMeasure":
        """The measure ``c * mu`` with bounds scaled accordingly."""
        p = dict(self.params)
        if self.kind == "constant":
            p["value"] = c * p["value"]
        elif self.kind == "trig_polynomial":
            p["coeffs"] = tuple(c * v for v in p["coeffs"])
        elif self.kind == "tabulated":
            p["values"] = c * np.asarray(p["values"])
        else:
            t = _tabulate(self)
            t["values"] = c * t["values"]
            return SpectralMeasure("tabulated", c * self.lam, c * self.Lam, t, self.dim)
        return SpectralMeasure(self.kind, c * self.lam, c * self.Lam, p, self.dim)


def _tabulate(mu: SpectralMeasure, m: int = 4096) -> dict:
    t = np.pi * np.arange(m) / m
    return {"angles": t, "values": mu._on_angle(t)}


def _probe_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    t = 2 * np.pi * np.arange(2048) / 2048
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _symmetrize_table(angles, values):
    a = np.mod(np.asarray(angles, dtype=float), np.pi)
    v = np.asarray(values, dtype=float)
    if a.shape != v.shape or a.size < 2:
        raise ValueError("tabulated measure needs at least two (angle, value) pairs")
    # average entries that describe the same line (theta and -theta)
    key = np.round(a / np.pi * 2**40).astype(np.int64) % 2**40
    uniq, first, inv = np.unique(key, return_index=True, return_inverse=True)
    sums = np.zeros(uniq.size)
    cnt = np.zeros(uniq.size)
    np.add.at(sums, inv, v)
    np.add.at(cnt, inv, 1)
    order = np.argsort(a[first], kind="stable")
    ang = a[first][order]
    val = (sums / cnt)[order]
    return ang, val


def read_measure_table(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV (angle, value); a header row is optional."""
    ang, val = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                a, v = float(row[0]), float(row[1])
            except ValueError:
                if not ang:
                    continue  # header
                raise
            ang.append(a)
            val.append(v)
    return np.asarray(ang), np.asarray(val)


def write_measure_table(path: str | Path, mu: SpectralMeasure) -> None:
    if mu.kind != "tabulated":
        raise ValueError("only tabulated measures can be written")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "value"])
        for a, v in zip(mu.params["angles"], mu.params["values"]):
            w.writerow([repr(float(a)), repr(float(v))])


# ---------------------------------------------------------------- sphere rules


@dataclass(frozen=True, eq=False)
class SphereRule:
    """Direction quadrature on S^{n-1}.

    Nodes come in antipodal pairs: ``nodes[half + i] == -nodes[i]`` exactly,
    with equal weights.  ``embedded`` holds the weights of a lower-order rule
    on the same nodes (zero where unused), giving an error estimate.
    """

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    embedded: np.ndarray

    @property
    def half(self) -> int:
        return self.nodes.shape[0] // 2

    def integrate(self, values: np.ndarray) -> Estimate:
        v = float(np.dot(self.weights, values))
        e = float(np.dot(self.embedded, values))
        return Estimate(v, abs(v - e))

    def integrate_even(self, half_values: np.ndarray) -> Estimate:
        """Integrate a function known to be even, given on the first half."""
        k = self.half
        v = 2.0 * float(np.dot(self.weights[:k], half_values))
        e = 2.0 * float(np.dot(self.embedded[:k], half_values))
        return Estimate(v, abs(v - e))


def _rule_from_half(t, w, we) -> SphereRule:
    first = np.stack([np.cos(t), np.sin(t)], axis=-1)
    # exact zeros on the axes keep canonical angles clean
    first[np.abs(first) < 1e-15] = 0.0
    nodes = np.concatenate([first, -first])
    return SphereRule(2, nodes, np.concatenate([w, w]), np.concatenate([we, we]))


def sphere_rule(n: int, order: int = 128) -> SphereRule:
    """Equal-weight trapezoid rule on the circle (n=2) or the two-point S^0.

    The embedded rule uses every other node, so the error estimate is the
    difference between the ``order`` and ``order/2`` trapezoid sums.
    """
    if n == 1:
        nodes = np.array([[1.0], [-1.0]])
        w = np.ones(2)
        return SphereRule(1, nodes, w, w.copy())
    if n != 2:
        raise ValueError("only n = 1, 2 are supported")
    if order < 8 or order % 2:
        raise ValueError("order must be even and at least 8")
    half = order // 2
    t = 2 * np.pi * np.arange(half) / order
    w = np.full(half, 2 * np.pi / order)
    if half % 2 == 0:
        we = np.where(np.arange(half) % 2 == 0, 2 * w, 0.0)
    else:
        # order/2 is odd: fall back to the same rule (no nested subset pairs)
        we = w.copy()
    return _rule_from_half(t, w, we)


def graded_sphere_rule(points: int = 8, levels: int = 10, ratio: float = 4.0, extra=()) -> SphereRule:
    """Composite Clenshaw-Curtis rule on the circle graded toward theta_n = 0.

    Panels split at angles 0, pi/2 and any ``extra`` angles in (0, pi), and
    shrink geometrically (by ``ratio``) toward 0 and pi where integrands such
    as ``|theta_n|^(2s)`` are singular; they are graded the same way on
    both sides of each ``extra`` angle.  Each panel carries ``points + 1``
    nodes; the embedded rule uses every other node.
    """
    x, w = clenshaw_curtis(points)
    _, w2 = clenshaw_curtis(points // 2)
    edges = {0.0, np.pi / 2, np.pi}
    for k in range(1, levels + 1):
        edges.add((np.pi / 2) * ratio**-k)
        edges.add(np.pi - (np.pi / 2) * ratio**-k)
    for a in extra:
        a = float(np.mod(a, np.pi))
        if 0 < a < np.pi:
            edges.add(a)
            for k in range(1, levels + 1):
                for c in (a - 0.25 * ratio ** (1 - k), a + 0.25 * ratio ** (1 - k)):
                    if 0 < c < np.pi:
                        edges.add(c)
    e = np.array(sorted(edges))
    tt, ww, wwe = [], [], []
    for a, b in zip(e[:-1], e[1:]):
        tt.append(a + (b - a) * x)
        ww.append((b - a) * w)
        we = np.zeros_like(w)
        we[::2] = (b - a) * w2
        wwe.append(we)
    T = np.concatenate(tt)
    W = np.concatenate(ww)
    WE = np.concatenate(wwe)
    # merge duplicated panel endpoints; pi folds onto 0 under antipodal symmetry
    T = np.where(np.isclose(T, np.pi, rtol=0, atol=1e-15), 0.0, T)
    key, inv = np.unique(np.round(T * 1e14).astype(np.int64), return_inverse=True)
    t = np.zeros(key.size)
    t[inv] = T
    wsum = np.bincount(inv, W)
    wesum = np.bincount(inv, WE)
    return _rule_from_half(t, wsum, wesum)


def rotated_rule(rule: SphereRule, angle: float) -> SphereRule:
    """The rule rotated by ``angle`` (antipodal pairing is preserved)."""
    if rule.n != 2:
        return rule
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    k = rule.half
    first = rule.nodes[:k] @ R.T
    return SphereRule(2, np.concatenate([first, -first]), rule.weights, rule.embedded)


def aligned_rule(x, radii=(), points: int = 8, levels: int = 6, extra=()) -> SphereRule:
    """Graded rule refined toward the directions orthogonal to ``x`` and
    toward the tangents from ``x`` to the circles ``|y| = r`` (``r < |x|``).

    Suited to radial fields whose profile is singular on those circles;
    ``extra`` angles are measured in the frame where ``x`` points along e_2.
    """
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    ex = list(extra)
    for rad in radii:
        if 0 < rad < r:
            a = math.asin(rad / r)
            ex.extend([math.pi / 2 - a, math.pi / 2 + a])
    rule = graded_sphere_rule(points=points, levels=levels, extra=ex)
    ang = math.atan2(x[1], x[0]) - math.pi / 2 if r > 0 else 0.0
    return rotated_rule(rule, ang)


def directional_weight(mu: SpectralMeasure, s: float, rule: SphereRule | None = None) -> float:
    """Quadrature value of ``int_S |theta_n|^(2s) mu(theta) d theta``.

    By default a graded Clenshaw-Curtis rule resolves the ``|theta_n|^(2s)``
    singularity and the kinks of ``mu``, giving close to machine accuracy.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if mu.dim == 1:
        rule = sphere_rule(1)
    elif rule is None:
        rule = graded_sphere_rule(points=16, levels=14, extra=mu.kink_angles())
    th = rule.nodes
    vals = np.abs(th[:, -1]) ** (2 * s) * mu(th)
    return rule.integrate(vals).value
