# Independent brute-force evaluation of every closed-form bound quantity.
# Deliberately written against the displayed formulas using plain python
# floats and loops, with no imports from the package under test; the test
# suite compares the package implementations against these to 1e-12.

import math

MU = 2.0 / 3.0


def ref_quad_constants(eigs, g):
    lam = [abs(e) ** 2 for e in eigs]  # eigenvalues of B^2
    p = 0.0
    v2 = 0.0
    lam_star = 0.0
    for l in lam:
        p += l
        v2 += 2.0 * l * l
        if l > lam_star:
            lam_star = l
    v = math.sqrt(v2)
    if math.isinf(g):
        return p, v, lam_star, math.inf, math.inf, math.inf
    if g * g < 2.0 * p:
        raise ValueError("outside stated regime")
    g_c = math.sqrt(g * g - MU * p)
    logdet = 0.0
    for l in lam:
        logdet += math.log(1.0 - MU * l / lam_star)
    x_c = 0.5 * ((g * g / MU - p) / lam_star + logdet) - 2.0
    y_c = math.sqrt(p + 6.0 * lam_star * (x_c + 2.0))
    return p, v, lam_star, x_c, y_c, g_c


def ref_quad_quantile(x, eigs, g):
    p, v, lam_star, x_c, y_c, g_c = ref_quad_constants(eigs, g)
    if lam_star == 0.0:
        return 0.0
    if x + 1.0 <= v / (18.0 * lam_star):
        return math.sqrt(p + 2.0 * v * math.sqrt(x + 1.0))
    if x + 1.0 <= x_c + 2.0:
        return math.sqrt(p + 6.0 * lam_star * (x + 1.0))
    return abs(y_c + 2.0 * lam_star * (x - x_c + 1.0) / g_c)


def ref_quad_branch(x, eigs, g):
    p, v, lam_star, x_c, y_c, g_c = ref_quad_constants(eigs, g)
    if x + 1.0 <= v / (18.0 * lam_star):
        return 1
    if x + 1.0 <= x_c + 2.0:
        return 2
    return 3


def ref_entropy_sq(x, Q, g0):
    t = 1.0 + math.sqrt(x + Q)
    if t <= g0:
        return t * t
    return 1.0 + (2.0 * (x + Q) / g0 + g0) ** 2


def ref_entropy(x, Q, g0):
    s = math.sqrt(2.0 * (x + Q))
    if s <= g0:
        return s
    return (x + Q) / g0 + g0 / 2.0


def ref_k0(R_K, x, nu0, omega, delta_at_RK, z):
    return (
        (0.5 + 12.0 * nu0 * omega) * R_K * R_K
        + (delta_at_RK + z) * R_K
        + 6.0 * nu0 * omega * z * z
    )


def ref_r0(x, K0, p_star, nu0, b, nu, z):
    inner = x + 2.4 * p_star + b * b / (9.0 * nu0 * nu0) * K0
    other = 6.0 * nu0 / (b * (1.0 - nu)) * math.sqrt(inner)
    return z if z > other else other


def ref_spread_q(r, x, p_star, nu1, omega, g0, delta_at_r):
    return delta_at_r * r + 6.0 * nu1 * omega * (ref_entropy_sq(x, 4.0 * p_star, g0) + 2.0 * r * r)


def ref_convert(g, nu):
    fac = (1.0 + nu * math.sqrt(1.0 + nu * nu)) / math.sqrt(1.0 - nu * nu)
    g_breve = math.inf if math.isinf(g) else g / fac
    return g_breve, nu * fac


def ref_spread_breve(r, x, p_star, p, nu1, omega_breve, g0, delta_breve_at_r, nu):
    lead = 8.0 / (1.0 - nu * nu) ** 2
    z0sq = ref_entropy_sq(x, 2.0 * p_star + 2.0 * p, g0)
    return lead * delta_breve_at_r * r + 6.0 * nu1 * omega_breve * (z0sq + 2.0 * r * r)


def ref_spread_breve_plain(r, x, p_star, p, nu1, omega_breve, g0, delta_breve_at_r, nu):
    lead = 8.0 / (1.0 - nu * nu) ** 2
    zq = ref_entropy(x, 2.0 * p_star + 2.0 * p, g0)
    return lead * delta_breve_at_r * r + 6.0 * nu1 * omega_breve * zq * r


def ref_c_nu(nu):
    return 2.0 * math.sqrt(2.0) * (1.0 + math.sqrt(nu)) / (1.0 - math.sqrt(nu))


def ref_rk(k, nu, R0, z, spread):
    return (
        2.0
        * math.sqrt(2.0)
        / (1.0 - math.sqrt(nu))
        * ((z + spread) + (1.0 + math.sqrt(nu)) * nu**k * R0)
    )


def ref_check_a3(eps, z, R0, nu):
    C = ref_c_nu(nu)
    c1 = eps * 7.0 * C / (1.0 - nu) * (z + eps * z * z)
    c2 = eps * 7.0 * C / (1.0 - nu) * R0
    return c1, c2, (c1 < 1.0 and c2 < 1.0)


def ref_rk_refined(k, nu, R0, z, eps):
    c1, c2, ok = ref_check_a3(eps, z, R0, nu)
    if not ok:
        raise ValueError("smallness check fails")
    C = ref_c_nu(nu)
    zz = z + eps * z * z
    head = C * zz + eps * (7.0**2 * C**4 / (1.0 - c1)) * (1.0 / (1.0 - nu)) * zz * zz
    tail = C * R0 + eps * (7.0**2 * C**4 / (1.0 - c2)) * (nu / (1.0 - nu)) * R0 * R0
    return head + nu**k * tail


def ref_check_b1(x, p_star, nu0, b, nu_r, g_of_r, r_grid):
    s = math.sqrt(x + 4.0 * p_star)
    r_min = 6.0 * nu0 / b * s
    for r in r_grid:
        if r < r_min:
            continue
        if not (1.0 + s) <= 3.0 * nu_r * nu_r * g_of_r(r) / b:
            return False
    return True


def ref_stop_k(z, R0, nu):
    val = (2.0 * math.log(z) - math.log(2.0 * R0)) / math.log(nu)
    k = math.ceil(val)
    return k if k > 0 else 0


def ref_kappa(R0, delta_at_R0, omega2, nu2, nu, norm_dinv, z_6pstar, z_hess):
    pref = 2.0 * math.sqrt(2.0) * (1.0 + math.sqrt(nu)) / math.sqrt(1.0 - nu)
    return pref * (delta_at_R0 + 9.0 * omega2 * nu2 * norm_dinv * z_6pstar * R0 + norm_dinv * z_hess)


def ref_me_radius(k, kappa, nu, R_tilde):
    if not kappa < 1.0 - nu:
        raise ValueError("needs kappa < 1 - nu")
    if kappa * k <= 1.0:
        return nu**k * 2.0 * math.sqrt(2.0) * R_tilde / (1.0 - kappa * k)
    num = math.log(1.0 / nu) - (math.log(2.0 * math.sqrt(2.0)) - math.log(kappa * k - 1.0)) / k
    den = 1.0 + math.log(1.0 - nu) / math.log(k)
    L = math.floor(num / den)
    if L < 0:
        L = 0
    tau = (kappa / (1.0 - nu)) ** L
    return 2.0 * (1.0 - nu) / kappa * tau ** (k / math.log(k)) * R_tilde
