"""Independent high-precision reference values (mpmath), used to freeze test constants."""

import mpmath as mp

mp.mp.dps = 30


def c1s(s):
    s = mp.mpf(s)
    return s * 4**s * mp.gamma(mp.mpf(1) / 2 + s) / (mp.sqrt(mp.pi) * mp.gamma(1 - s))


def frac_lap_power(s, beta, x=1):
    """(-Delta)^s (t_+)^beta at x by direct PV quadrature of the paired integrand."""
    s, beta, x = mp.mpf(s), mp.mpf(beta), mp.mpf(x)

    # homogeneity reduces to x = 1
    d = _second_difference(beta)
    I = mp.quad(lambda r: d(r) * r ** (-1 - 2 * s), [0, mp.mpf(1) / 2, 1, 2, mp.inf])
    return -2 * c1s(s) * I * x ** (beta - 2 * s)


def sphere_power_moment(s):
    """int_0^{2pi} |sin t|^{2s} dt."""
    s = mp.mpf(s)
    return 2 * mp.sqrt(mp.pi) * mp.gamma(s + mp.mpf(1) / 2) / mp.gamma(s + 1)


def star_power_extremals(s, beta, lam, Lam):
    """(M+, M-) over the stable class of (x_n)_+^beta at e_n, n = 2."""
    I1 = -frac_lap_power(s, beta) / (2 * c1s(s))
    k = (1 - mp.mpf(s)) * I1 * sphere_power_moment(s)
    return (Lam * k, lam * k) if k > 0 else (lam * k, Lam * k)


def _second_difference(beta, terms=60):
    """r -> ((1+r)^beta + (1-r)_+^beta)/2 - 1, using the binomial series for
    r < 1/2 to avoid cancellation at the singular end."""
    beta = mp.mpf(beta)
    coef = [mp.binomial(beta, 2 * k) for k in range(1, terms + 1)]

    def d(r):
        if r < mp.mpf(1) / 2:
            return sum(c * r ** (2 * k + 2) for k, c in enumerate(coef))
        return ((1 + r) ** beta + (max(1 - r, 0)) ** beta) / 2 - 1

    return d


_delta_s = _second_difference


def rough_s_power_plus(s, lam, Lam):
    """M+ over the rough class of (x_n)_+^s at e_n, n = 2."""
    s = mp.mpf(s)
    d = _delta_s(s)
    r0 = 2 ** (1 / s) - 1
    J = mp.quad(lambda r: d(r) * r ** (-1 - 2 * s), [r0, 2 * r0, mp.inf])
    return (1 - s) * (Lam - lam) * sphere_power_moment(s) * J


def indicator_s_power(s, lam, Lam, radius=mp.mpf(1) / 2):
    """L (x_n)_+^s at e_n for b = lam + (Lam - lam) 1_{|y| < radius}, n = 2."""
    s = mp.mpf(s)
    d = _delta_s(s)

    def G(a):
        return mp.quad(lambda r: d(r) * r ** (-1 - 2 * s), [0, a])

    inner = mp.quad(lambda t: mp.sin(t) ** (2 * s) * G(radius * mp.sin(t)), [0, mp.pi / 2])
    return (1 - s) * (Lam - lam) * 4 * inner


def ball_power_constant(s):
    """(-Delta)^s (1 - x^2)_+^s in one dimension (constant inside)."""
    s = mp.mpf(s)
    return 4**s * mp.gamma(1 + s) * mp.gamma(mp.mpf(1) / 2 + s) / mp.gamma(mp.mpf(1) / 2)


def hyp_poly(nu, s, x):
    return mp.hyp2f1(-nu, nu + 1, 1 - mp.mpf(s), x)


if __name__ == "__main__":
    print("c1s", [mp.nstr(c1s(s), 17) for s in (0.25, 0.5, 0.75)])
    print("fl(.75,1.2,1)", mp.nstr(frac_lap_power(0.75, 1.2), 17))
    print("fl(.5,.5,1)", mp.nstr(frac_lap_power(0.5, 0.5), 17))
    print("fl(.5,.25,1)", mp.nstr(frac_lap_power(0.5, 0.25), 17))
    print("star(.75,1.2)", [mp.nstr(v, 17) for v in star_power_extremals(0.75, 1.2, 1, 2)])
    print("star(.5,.05)", [mp.nstr(v, 17) for v in star_power_extremals(0.5, 0.05, 1, 2)])
    for s in (0.4, 0.5, 0.6, 0.75):
        print("rough+", s, mp.nstr(rough_s_power_plus(s, 1, 2), 17), "ind", mp.nstr(indicator_s_power(s, 1, 2), 17))
    print("ball", [mp.nstr(ball_power_constant(s), 17) for s in (0.3, 0.5, 0.8)])
    print("hyp", mp.nstr(hyp_poly(3, 0.3, 0.37), 17))


def frac_lap_tent(s, x):
    """(-Delta)^s (1 - |t|)_+^s at 0 < x < 1 (one dimension)."""
    s, x = mp.mpf(s), mp.mpf(x)

    def w(t):
        return (1 - abs(t)) ** s if abs(t) < 1 else mp.mpf(0)

    def g(r):
        return ((w(x + r) + w(x - r)) / 2 - w(x)) * r ** (-1 - 2 * s)

    # below eps the paired difference is w''(x) r^2 / 2 to relative O(eps^2)
    a = min(x, 1 - x) / 2
    eps = a * mp.mpf(10) ** -8
    w2 = s * (s - 1) * (1 - x) ** (s - 2)
    near = w2 / 2 * eps ** (2 - 2 * s) / (2 - 2 * s) + mp.quad(g, [eps, a / 1024, a / 32, a])
    far = mp.quad(g, [a, x, 1 - x, 1 + x, 2, mp.inf] if x < 0.5 else [a, 1 - x, x, 1 + x, 2, mp.inf])
    return -2 * c1s(s) * (near + far)
