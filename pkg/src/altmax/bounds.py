"""Closed-form finite-sample quantities for the alternating-maximization analysis.

Everything here is a deterministic formula: sub-Gaussian quadratic-form
quantiles, entropy-corrected deviation levels for suprema of smooth
processes, the initial-guess level K0 and concentration radius R0, the
parametric and semiparametric uniform spreads, the per-step radii r_k of the
Fisher/Wilks statements, the step-count rule, and the second-order roughness
coefficient kappa with the nearly-linear convergence radii.  A seeded Monte
Carlo validator for the quadratic-form tail bound is included.

Piecewise formulas use <= for the first branch throughout.  Monotonicity
in x and k holds as stated, but branch continuity is not asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_C = 2.0 / 3.0


class UnsupportedRegimeError(ValueError):
    """Inputs fall outside the regime the formula is stated for."""


@dataclass(frozen=True)
class ConditionConstants:
    """Scalar and parametric constants of the model-regularity conditions.

    The local non-quadraticity map delta(r) is parametrized as
    delta_const + delta_slope * r (non-negative, non-decreasing); the
    large-deviation exponential-moment map g(r) is the constant g_r_value.
    Infinite g / g0 select the first branch of every piecewise quantile,
    matching models with genuinely Gaussian errors.
    """

    nu0: float = 1.0
    nu1: float = 1.0
    nu2: float = 1.0
    omega: float = 0.0
    omega2: float = 0.0
    g: float = math.inf
    g0: float = math.inf
    b: float = 1.0
    nu_r: float = 1.0
    delta_slope: float = 0.0
    delta_const: float = 0.0
    g_r_value: float = math.inf
    beta_A_value: float = 0.0
    z_hess: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.omega <= 0.5) or not (0.0 <= self.omega2 <= 0.5):
            raise ValueError("omega and omega2 must lie in [0, 1/2]")
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if self.delta_slope < 0 or self.delta_const < 0:
            raise ValueError("delta map must be non-negative and non-decreasing")

    def delta(self, r):
        return self.delta_const + self.delta_slope * r

    def g_r(self, r):
        return self.g_r_value

    def beta_A(self, x):
        return self.beta_A_value


@dataclass(frozen=True)
class BreveConstants:
    g: float
    nu: float
    delta_slope: float
    delta_const: float
    omega: float

    def delta(self, r):
        return self.delta_const + self.delta_slope * r


def quad_form_constants(B, g):
    """(p_B, v_B, lambda_star, x_c, y_c, g_c) for the quadratic-form quantile.

    B is a symmetric PSD matrix; the quadratic form is ||B xi||^2 = xi' B^2 xi,
    so the ingredients are p_B = tr(B^2), v_B^2 = 2 tr(B^4),
    lambda_star = ||B^2||, and the critical constants use mu_c = 2/3.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    w = np.linalg.eigvalsh(0.5 * (B + B.T))
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise ValueError("B must be symmetric PSD")
    lam = np.clip(w, 0.0, None) ** 2  # eigenvalues of B^2
    p_B = float(lam.sum())
    v_B = float(math.sqrt(2.0 * float((lam**2).sum())))
    lam_star = float(lam.max())
    if math.isinf(g):
        return p_B, v_B, lam_star, math.inf, math.inf, math.inf
    if g * g < 2.0 * p_B:
        raise UnsupportedRegimeError(
            f"g^2 = {g * g:.6g} < 2 tr(B^2) = {2 * p_B:.6g}: outside the stated regime"
        )
    g_c = math.sqrt(g * g - MU_C * p_B)
    if lam_star == 0.0:
        return p_B, v_B, lam_star, math.inf, math.inf, g_c
    logdet = float(np.log(1.0 - MU_C * lam / lam_star).sum())
    x_c = 0.5 * ((g * g / MU_C - p_B) / lam_star + logdet) - 2.0
    y_c = math.sqrt(p_B + 6.0 * lam_star * (x_c + 2.0))
    return p_B, v_B, lam_star, x_c, y_c, g_c


def quad_form_quantile(x, B, g=math.inf):
    """Sub-Gaussian deviation level z(x, B) with P(||B xi|| > z) <= 2 exp(-x)."""
    if x <= 0:
        raise ValueError("x must be > 0")
    p_B, v_B, lam_star, x_c, y_c, g_c = quad_form_constants(B, g)
    if lam_star == 0.0:
        return 0.0
    if x + 1.0 <= v_B / (18.0 * lam_star):
        z2 = p_B + 2.0 * v_B * math.sqrt(x + 1.0)
    elif x + 1.0 <= x_c + 2.0:
        z2 = p_B + 6.0 * lam_star * (x + 1.0)
    else:
        z2 = (y_c + 2.0 * lam_star * (x - x_c + 1.0) / g_c) ** 2
    return math.sqrt(z2)


def entropy_quantile_sq(x, Q, g0=math.inf):
    """Squared entropy-corrected deviation level z0(x, Q)^2 for suprema of
    smooth vector processes over a set of complexity Q."""
    if x < 0 or Q < 0 or g0 <= 0:
        raise ValueError("x, Q >= 0 and g0 > 0 required")
    t = 1.0 + math.sqrt(x + Q)
    if t <= g0:
        return t * t
    return 1.0 + (2.0 * (x + Q) / g0 + g0) ** 2


def entropy_quantile(x, Q, g0=math.inf):
    """Entropy deviation level z(x, Q) for suprema of spectral-norm processes."""
    if x < 0 or Q < 0 or g0 <= 0:
        raise ValueError("x, Q >= 0 and g0 > 0 required")
    s = math.sqrt(2.0 * (x + Q))
    if s <= g0:
        return s
    return (x + Q) / g0 + g0 / 2.0


def combined_quantile(x, p_star, B=None, cc: ConditionConstants | None = None):
    """z(x) = z(x, B) v z0(x, 4 p*): the single symbol covering all
    sqrt(p* + x)-order terms."""
    cc = cc or ConditionConstants()
    if B is None:
        B = np.eye(p_star)
    return max(
        quad_form_quantile(x, B, cc.g),
        math.sqrt(entropy_quantile_sq(x, 4.0 * p_star, cc.g0)),
    )


def initial_level_K0(R_K, x, cc: ConditionConstants, z):
    """Initial-guess level K0 from a radius R_K containing the start."""
    if R_K < 0:
        raise ValueError("R_K must be >= 0")
    return (
        (0.5 + 12.0 * cc.nu0 * cc.omega) * R_K**2
        + (cc.delta(R_K) + z) * R_K
        + 6.0 * cc.nu0 * cc.omega * z**2
    )


def concentration_radius_R0(x, K0, p_star, cc: ConditionConstants, nu, z):
    """Radius confining the whole alternating sequence with high probability."""
    if cc.b <= 0:
        raise ValueError("b must be > 0")
    if not nu < 1.0:
        raise ValueError("nu < 1 required")
    inner = x + 2.4 * p_star + (cc.b**2 / (9.0 * cc.nu0**2)) * K0
    return max(z, 6.0 * cc.nu0 / (cc.b * (1.0 - nu)) * math.sqrt(inner))


def spread_parametric(r, x, p_star, cc: ConditionConstants):
    """Parametric uniform spread: delta(r) r + 6 nu1 omega (z0(x,4p*)^2 + 2 r^2)."""
    z0sq = entropy_quantile_sq(x, 4.0 * p_star, cc.g0)
    return cc.delta(r) * r + 6.0 * cc.nu1 * cc.omega * (z0sq + 2.0 * r**2)


def convert_conditions(cc: ConditionConstants, nu) -> BreveConstants:
    """Projected-condition constants implied by the full ones under coupling nu."""
    fac = (1.0 + nu * math.sqrt(1.0 + nu**2)) / math.sqrt(1.0 - nu**2)
    g_breve = cc.g / fac if not math.isinf(cc.g) else math.inf
    return BreveConstants(
        g=g_breve,
        nu=nu * fac,
        delta_slope=cc.delta_slope,
        delta_const=cc.delta_const,
        omega=cc.omega,
    )


def spread_semiparametric(r, x, p_star, p, cc: ConditionConstants, nu,
                          breve: BreveConstants | None = None):
    """Semiparametric uniform spread with the entropy-squared correction."""
    br = breve or convert_conditions(cc, nu)
    z0sq = entropy_quantile_sq(x, 2.0 * p_star + 2.0 * p, cc.g0)
    lead = 8.0 / (1.0 - nu**2) ** 2
    return lead * br.delta(r) * r + 6.0 * cc.nu1 * br.omega * (z0sq + 2.0 * r**2)


def spread_semiparametric_plain(r, x, p_star, p, cc: ConditionConstants, nu,
                                breve: BreveConstants | None = None):
    """Plain semiparametric spread, linear in r."""
    br = breve or convert_conditions(cc, nu)
    zq = entropy_quantile(x, 2.0 * p_star + 2.0 * p, cc.g0)
    lead = 8.0 / (1.0 - nu**2) ** 2
    return lead * br.delta(r) * r + 6.0 * cc.nu1 * br.omega * zq * r


def C_nu(nu):
    """C(nu) = 2 sqrt(2) (1 + sqrt(nu)) / (1 - sqrt(nu))."""
    if not 0.0 <= nu < 1.0:
        raise ValueError("0 <= nu < 1 required")
    rn = math.sqrt(nu)
    return 2.0 * math.sqrt(2.0) * (1.0 + rn) / (1.0 - rn)


def fisher_radius(k, x, nu, R0, z, spread_at_R0):
    """Basic per-step localization radius r_k."""
    rn = math.sqrt(nu)
    return 2.0 * math.sqrt(2.0) / (1.0 - rn) * (
        (z + spread_at_R0) + (1.0 + rn) * nu**k * R0
    )


def check_A3(eps, z, R0, nu):
    """Smallness coefficients c(eps, z) and c(eps, R0); pass iff both < 1."""
    C = C_nu(nu)
    c1 = eps * 7.0 * C * (1.0 / (1.0 - nu)) * (z + eps * z**2)
    c2 = eps * 7.0 * C * (1.0 / (1.0 - nu)) * R0
    return c1, c2, (c1 < 1.0 and c2 < 1.0)


def fisher_radius_refined(k, x, nu, R0, z, eps):
    """Refined r_k with the second-order corrections; requires the smallness check."""
    c1, c2, ok = check_A3(eps, z, R0, nu)
    if not ok:
        raise UnsupportedRegimeError(
            f"smallness check failed: c(eps,z)={c1:.4g}, c(eps,R0)={c2:.4g}"
        )
    C = C_nu(nu)
    zz = z + eps * z**2
    head = C * zz + eps * (49.0 * C**4 / (1.0 - c1)) * (1.0 / (1.0 - nu)) * zz**2
    tail = C * R0 + eps * (49.0 * C**4 / (1.0 - c2)) * (nu / (1.0 - nu)) * R0**2
    return head + nu**k * tail


def check_B1(x, p_star, cc: ConditionConstants, r_grid=None):
    """Technical large-deviation condition, evaluated on a grid of radii."""
    s = math.sqrt(x + 4.0 * p_star)
    r_min = 6.0 * cc.nu0 / cc.b * s
    if r_grid is None:
        r_grid = [r_min * (2.0**i) for i in range(4)]
    lhs = 1.0 + s
    for r in r_grid:
        if r < r_min:
            continue
        if not lhs <= 3.0 * cc.nu_r**2 * cc.g_r(r) / cc.b:
            return False
    return True


def stopping_steps(z, R0, nu):
    """Number of alternation steps after which the nu^k R0 term is below z^2/2."""
    if not 0.0 < nu < 1.0:
        raise ValueError("stopping rule needs 0 < nu < 1")
    if z <= 0 or R0 <= 0:
        raise ValueError("z > 0 and R0 > 0 required")
    val = (2.0 * math.log(z) - math.log(2.0 * R0)) / math.log(nu)
    return max(0, math.ceil(val))


def kappa(R0, cc: ConditionConstants, nu, norm_Dinv, z_6pstar, z_hess):
    """Second-order roughness coefficient kappa(x, R0)."""
    pref = 2.0 * math.sqrt(2.0) * (1.0 + math.sqrt(nu)) / math.sqrt(1.0 - nu)
    return pref * (
        cc.delta(R0)
        + 9.0 * cc.omega2 * cc.nu2 * norm_Dinv * z_6pstar * R0
        + norm_Dinv * z_hess
    )


def me_tau_L(k, kappa_val, nu):
    """(tau, L) of the nearly-linear convergence branch; defined for kappa k > 1."""
    if k < 2:
        raise ValueError("second branch needs k >= 2")
    num = math.log(1.0 / nu) - (math.log(2.0 * math.sqrt(2.0)) - math.log(kappa_val * k - 1.0)) / k
    den = 1.0 + math.log(1.0 - nu) / math.log(k)
    L = max(math.floor(num / den), 0)
    tau = (kappa_val / (1.0 - nu)) ** L
    return tau, L


def me_radius(k, kappa_val, nu, R_tilde0, with_aux=False):
    """Distance-to-maximizer radius r_k* of the nearly-linear convergence result."""
    if not kappa_val < 1.0 - nu:
        raise UnsupportedRegimeError(
            f"kappa = {kappa_val:.4g} must be < 1 - nu = {1 - nu:.4g}"
        )
    if k < 0:
        raise ValueError("k must be >= 0")
    if kappa_val * k <= 1.0:
        val = nu**k * 2.0 * math.sqrt(2.0) * R_tilde0 / (1.0 - kappa_val * k)
        return (val, None, None) if with_aux else val
    tau, L = me_tau_L(k, kappa_val, nu)
    val = 2.0 * (1.0 - nu) / kappa_val * tau ** (k / math.log(k)) * R_tilde0
    return (val, tau, L) if with_aux else val


def validate_quad_tail(B, x_list, n_draws, seed, g=math.inf, chunk=20_000):
    """Empirical exceedance of ||B xi|| over the quantile, per x.

    Draws are generated in fixed-size chunks, each with a seed derived from
    (seed, chunk index), so the result is independent of execution schedule.
    Pass criterion: fraction <= 2 exp(-x) + 3 binomial standard errors.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    dim = B.shape[0]
    zs = [quad_form_quantile(x, B, g) for x in x_list]
    counts = np.zeros(len(x_list), dtype=np.int64)
    n_chunks = (n_draws + chunk - 1) // chunk
    done = 0
    for c in range(n_chunks):
        size = min(chunk, n_draws - done)
        done += size
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
        xi = rng.standard_normal((size, dim))
        norms = np.linalg.norm(xi @ B.T, axis=1)
        for i, z in enumerate(zs):
            counts[i] += int(np.count_nonzero(norms > z))
    out = []
    for i, x in enumerate(x_list):
        frac = counts[i] / n_draws
        se = math.sqrt(max(frac * (1.0 - frac), 1.0 / n_draws) / n_draws)
        bound = 2.0 * math.exp(-x)
        out.append(
            {
                "x": float(x),
                "z": float(zs[i]),
                "count": int(counts[i]),
                "fraction": float(frac),
                "se": float(se),
                "bound": float(bound),
                "ok": bool(frac <= bound + 3.0 * se),
            }
        )
    return out


@dataclass
class BoundReport:
    """All computed finite-sample quantities for one configuration."""

    x: float
    p: int
    m: int
    nu: float
    z_quad: float
    z0_sq: float
    z_entropy: float
    z_x: float
    K0: float
    R0: float
    r_ups: float
    spread_Q: float
    spread_semi: float
    spread_semi_plain: float
    r_k: list
    r_k_refined: list | None
    K_stop: int
    kappa: float
    r_star_k: list
    tau_x: float | None
    L_k: int | None
    p_B: float
    v_B: float
    lambda_star: float
    x_c: float
    y_c: float
    g_c: float
    mu_c: float
    C_nu: float
    prob_level: float
    checks: dict = field(default_factory=dict)

    def to_kv(self):
        skip = {"r_k", "r_k_refined", "r_star_k", "checks"}
        items = []
        for name, val in self.__dict__.items():
            if name in skip:
                continue
            items.append((name, val))
        for name, val in self.checks.items():
            items.append((f"check_{name}", val))
        return items

    def write_kv(self, path):
        with open(path, "w") as f:
            for name, val in self.to_kv():
                f.write(f"{name} = {val!r}\n")

    def write_csv(self, path, radii_path=None):
        kv = self.to_kv()
        with open(path, "w") as f:
            f.write("key,value\n")
            for name, val in kv:
                f.write(f"{name},{val!r}\n")
        if radii_path is not None:
            with open(radii_path, "w") as f:
                f.write("k,r_k,r_k_refined,r_star_k\n")
                for i in range(len(self.r_k)):
                    ref = self.r_k_refined[i] if self.r_k_refined is not None else ""
                    star = self.r_star_k[i] if i < len(self.r_star_k) else ""
                    f.write(f"{i},{self.r_k[i]!r},{ref!r},{star!r}\n")


def compute_bound_report(x, p, m, nu, cc: ConditionConstants, b_eigenvalues=None,
                         R_K=None, K0=None, eps=0.0, norm_Dinv=0.0,
                         k_max=20) -> BoundReport:
    """Evaluate the whole chain of bound formulas for one configuration."""
    p_star = p + m
    B = np.diag(b_eigenvalues) if b_eigenvalues is not None else np.eye(p_star)
    z_quad = quad_form_quantile(x, B, cc.g)
    z0sq = entropy_quantile_sq(x, 4.0 * p_star, cc.g0)
    z_x = max(z_quad, math.sqrt(z0sq))
    p_B, v_B, lam_star, x_c, y_c, g_c = quad_form_constants(B, cc.g)
    if K0 is None:
        if R_K is None:
            R_K = z_x
        K0 = initial_level_K0(R_K, x, cc, z_x)
    R0 = concentration_radius_R0(x, K0, p_star, cc, nu, z_x)
    r_ups = concentration_radius_R0(x, 0.0, p_star, cc, nu, z_x)
    sp_Q = spread_parametric(R0, x, p_star, cc)
    sp_semi = spread_semiparametric(R0, x, p_star, p, cc, nu)
    sp_plain = spread_semiparametric_plain(R0, x, p_star, p, cc, nu)
    r_k = [fisher_radius(k, x, nu, R0, z_x, sp_Q) for k in range(k_max + 1)]
    c1, c2, a3_ok = check_A3(eps, z_x, R0, nu)
    r_k_ref = None
    if eps > 0.0 and a3_ok:
        r_k_ref = [fisher_radius_refined(k, x, nu, R0, z_x, eps) for k in range(k_max + 1)]
    K_stop = stopping_steps(z_x, R0, nu) if 0.0 < nu < 1.0 else 0
    z6 = entropy_quantile(x, 6.0 * p_star, cc.g0)
    kap = kappa(R0, cc, nu, norm_Dinv, z6, cc.z_hess)
    R_tilde0 = R0 + r_ups
    r_star = []
    tau_x = None
    L_k = None
    if kap < 1.0 - nu:
        for k in range(k_max + 1):
            val, tau, L = me_radius(k, kap, nu, R_tilde0, with_aux=True)
            r_star.append(val)
            if tau is not None:
                tau_x, L_k = tau, L
    b1_ok = check_B1(x, p_star, cc)
    return BoundReport(
        x=x, p=p, m=m, nu=nu,
        z_quad=z_quad, z0_sq=z0sq, z_entropy=entropy_quantile(x, 2.0 * p_star + 2.0 * p, cc.g0),
        z_x=z_x, K0=K0, R0=R0, r_ups=r_ups,
        spread_Q=sp_Q, spread_semi=sp_semi, spread_semi_plain=sp_plain,
        r_k=r_k, r_k_refined=r_k_ref, K_stop=K_stop,
        kappa=kap, r_star_k=r_star, tau_x=tau_x, L_k=L_k,
        p_B=p_B, v_B=v_B, lambda_star=lam_star, x_c=x_c, y_c=y_c, g_c=g_c,
        mu_c=MU_C, C_nu=C_nu(nu),
        prob_level=1.0 - 8.0 * math.exp(-x) - cc.beta_A(x),
        checks={"A3_c1": c1, "A3_c2": c2, "A3_ok": a3_ok, "B1_ok": b1_ok,
                "kappa_lt_1mn": kap < 1.0 - nu},
    )
