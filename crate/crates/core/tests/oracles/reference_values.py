"""High-precision reference values for the golden tests.

Everything is computed from definitions by adaptive quadrature and root finding in
mpmath (50 digits), without the closed forms used by the Rust code:

  M*      = int F_p^{2p}
  K_M*    = int |x|^2 F_p^{2p}
  C_GN    = GN quotient of F_p
  K_pd    = min over dilations of the non-homogeneous functional, divided by M*^gamma
  sigma*  = root of m(1-m)/(2m-1)^2 s^{d(m-m_c)/2} = d(m-m_1)/(1-m)

Run with `python3 reference_values.py` and copy the printed values into golden.rs.
"""

import json

import mpmath as mp

mp.mp.dps = 50


def radial(g, d, breaks=()):
    """int_{R^d} g(|x|) dx, with extra breakpoints where g has kinks."""
    area = 2 * mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2)
    pts = sorted(set([mp.mpf(0), mp.mpf(1), mp.mpf(10), mp.mpf(100)] + list(breaks))) + [mp.inf]
    return area * mp.quad(lambda r: g(r) * r ** (d - 1), pts)


def sign_changes(g, r_max=100, samples=20000):
    """Roots of g on (0, r_max), bracketed on a uniform scan and refined by bisection."""
    roots = []
    xs = [mp.mpf(r_max) * i / samples for i in range(1, samples + 1)]
    for a, b in zip(xs, xs[1:]):
        if g(a) * g(b) < 0:
            roots.append(mp.findroot(g, (a, b), solver="bisect"))
    return roots


def exponents(d, p):
    d, p = mp.mpf(d), mp.mpf(p)
    m = (p + 1) / (2 * p)
    m_c = (d - 2) / d
    m_1 = (d - 1) / d
    gamma = (d + 2 - p * (d - 2)) / (d - p * (d - 4))
    theta = (p - 1) / p * d / (d + 2 - p * (d - 2))
    alpha = d / p + 2 - d
    beta = d * (p - 1) / (2 * p)
    return dict(d=d, p=p, m=m, m_c=m_c, m_1=m_1, gamma=gamma, theta=theta, alpha=alpha, beta=beta)


def constants(d, p):
    e = exponents(d, p)
    d_, p_, m = e["d"], e["p"], e["m"]
    F = lambda r: (1 + r * r) ** (-1 / (p_ - 1))
    dF = lambda r: -2 * r / (p_ - 1) * (1 + r * r) ** (-1 / (p_ - 1) - 1)
    a = radial(lambda r: dF(r) ** 2, d)
    b = radial(lambda r: F(r) ** (p_ + 1), d)
    c = radial(lambda r: F(r) ** (2 * p_), d)
    k_m = radial(lambda r: r * r * F(r) ** (2 * p_), d)
    int_bm = radial(lambda r: F(r) ** (2 * p_ * m), d)
    th = e["theta"]
    c_gn = c ** (1 / (2 * p_)) / (a ** (th / 2) * b ** ((1 - th) / (p_ + 1)))
    al, be = e["alpha"], e["beta"]
    lam = (be * b / (al * a)) ** (1 / (al + be))
    k_pd = (a * lam**al + b * lam ** (-be)) / c ** e["gamma"]
    lhs = lambda s: m * (1 - m) / (2 * m - 1) ** 2 * s ** (d_ * (m - e["m_c"]) / 2) - d_ * (m - e["m_1"]) / (1 - m)
    lo, hi = mp.mpf(-30), mp.mpf(30)  # lhs is increasing in log(s)
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if lhs(mp.exp(mid)) < 0 else (lo, mid)
    sigma_star = mp.exp((lo + hi) / 2)
    g = e["gamma"]
    c_pd = (2 * m - 1) ** 2 / (8 * (1 - m) ** 2) * ((d_ + 2) * m - d_) * d_**2 * (m - e["m_c"]) * (m - e["m_1"]) * c ** (g - 1) / sigma_star
    c_ck = (p_ - 1) / (p_ + 1) * (d_ + 2 - p_ * (d_ - 2)) / (32 * p_) * sigma_star ** (d_ * (p_ - 1) / (4 * p_)) * c ** (1 - g)
    kappa_1 = 2 * d_ * (1 - m) ** 2 / (m * k_m)
    kappa_2 = (m - e["m_c"]) * (m - e["m_1"]) * d_**2 / 2
    c_md = d_**3 / (2 * m * k_m) * (m - e["m_c"]) * (m - e["m_1"]) * (1 - m) ** 2
    return dict(
        m_star=c, k_m=k_m, int_b1_m=int_bm, sigma_star=sigma_star, c_gn=c_gn, k_pd=k_pd,
        lambda_star=lam, c_pd=c_pd, c_ck=c_ck, frak_c=c_pd * c_ck**2,
        kappa_1=kappa_1, kappa_2=kappa_2, c_md=c_md, grad=a, lp1=b,
    )


def mixture(d, p, s1, s2):
    """Functionals of u = (B_{s1} + B_{s2})/2 at mass M*."""
    e = exponents(d, p)
    d_, m = e["d"], e["m"]
    k = d_ * (m - e["m_c"]) / 2
    B = lambda s, r: s ** (-d_ / 2) * (1 + r * r / s) ** (1 / (m - 1))
    dB = lambda s, r: s ** (-d_ / 2) / (m - 1) * (1 + r * r / s) ** (1 / (m - 1) - 1) * 2 * r / s
    u = lambda r: (B(s1, r) + B(s2, r)) / 2
    du = lambda r: (dB(s1, r) + dB(s2, r)) / 2
    mass = radial(u, d)
    m2 = radial(lambda r: r * r * u(r), d)
    k_m = radial(lambda r: r * r * B(1, r), d)
    sigma = m2 / k_m
    Bs = lambda r: B(sigma, r)
    ent = radial(lambda r: (u(r) ** m - Bs(r) ** m - m * Bs(r) ** (m - 1) * (u(r) - Bs(r))) / (m - 1), d)
    # w = sigma^k (u^{m-1})' - 2r
    w = lambda r: sigma**k * (m - 1) * u(r) ** (m - 2) * du(r) - 2 * r
    fisher = sigma ** (-k) * m / (1 - m) * radial(lambda r: u(r) * w(r) ** 2, d)
    kinks = sign_changes(lambda r: u(r) - Bs(r))
    l1 = radial(lambda r: abs(u(r) - Bs(r)), d, kinks)
    wl1 = radial(lambda r: r * r * abs(u(r) - Bs(r)), d, kinks)
    return dict(mass=mass, m2=m2, sigma=sigma, entropy=ent, fisher=fisher, l1=l1, weighted_l1=wl1)


def main():
    out = {}
    for d, p in [(2, 2), (2, 3), (3, 2), (4, 1.5), (5, 1.4), (6, 1.2)]:
        out[f"constants d={d} p={p}"] = {k: mp.nstr(v, 20) for k, v in constants(d, p).items()}
    out["mixture d=2 p=2 sigma=1,4"] = {k: mp.nstr(v, 20) for k, v in mixture(2, 2, 1, 4).items()}
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
