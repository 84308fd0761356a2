"""Monte Carlo experiment runner: Wilks/Fisher verification, contraction-rate
estimation, convergence to the maximizer, condition probes, and dimension
sweeps.

Replication r of an experiment draws its generator from
SeedSequence(master_seed, spawn_key=(r,)), so results are independent of
execution order and thread count; aggregation sorts by replication index.
Failed replications are recorded and excluded from aggregates, up to a 5%
budget, beyond which the run aborts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.special

from .alternation import (
    AlternationConfig,
    MonotoneViolationError,
    SolverError,
    eta_update,
    fisher_residual,
    profile_estimate,
    run,
)
from .bounds import (
    C_nu,
    ConditionConstants,
    combined_quantile,
    concentration_radius_R0,
    fisher_radius,
    initial_level_K0,
    spread_parametric,
    spread_semiparametric,
    stopping_steps,
)
from .singleindex import SingleIndexModel, generate, grid_init
from .statcore import (
    BlockInformation,
    ParameterPoint,
    coupling_norm,
    efficient_score,
    sqrt_spd,
)
from .toy import simulate
from .wavelet import WaveletBasis


class HarnessError(RuntimeError):
    pass


def derive_rng(master_seed, index):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def derive_seed(master_seed, index):
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


# ---------------------------------------------------------------------------
# chi-square diagnostics
# ---------------------------------------------------------------------------

def chi2_cdf(x, k):
    """Exact chi-square CDF via the regularized lower incomplete gamma."""
    x = np.asarray(x, dtype=float)
    return scipy.special.gammainc(k / 2.0, np.clip(x, 0.0, None) / 2.0)


def ks_distance(samples, p):
    """Exact Kolmogorov-Smirnov distance between the empirical law and chi^2_p."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("need at least one sample")
    F = chi2_cdf(s, p)
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(F - (i - 1) / n, i / n - F)))


def chi2_diagnostics(samples, p):
    """(mean, variance, KS distance to chi^2_p)."""
    s = np.asarray(samples, dtype=float)
    return float(np.mean(s)), float(np.var(s, ddof=1)), ks_distance(s, p)


def fit_contraction(distances, floor=None, k_min=2):
    """Geometric rate by log-linear least squares on the tail of a distance sequence.

    Points with index < k_min or value <= 10*floor are excluded; fewer than
    two usable points returns NaN (flagged sentinel).
    """
    d = np.asarray(distances, dtype=float)
    if floor is None:
        positive = d[d > 0]
        tiny = positive.min() if positive.size else 0.0
        floor = max(float(d[-1]), 1e-300, 1e-15 * float(d.max() if d.size else 0.0))
        floor = min(floor, tiny) if positive.size else floor
    k = np.arange(d.size)
    keep = (k >= k_min) & (d > 10.0 * floor) & np.isfinite(d)
    if keep.sum() < 2:
        return float("nan")
    kk = k[keep].astype(float)
    ld = np.log(d[keep])
    slope = np.polyfit(kk, ld, 1)[0]
    return float(np.exp(slope))


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "toy"
    reps: int = 200
    x: float = 2.0
    steps: int | None = None  # None -> stopping rule
    z_target: float | None = None  # z used in the stopping rule; None -> z(x)
    master_seed: int = 0
    threads: int = 1
    solver_tolerance: float = 1e-9
    cc: ConditionConstants = field(default_factory=ConditionConstants)
    # toy family
    toy_p: int = 1
    toy_m: int = 1
    toy_d2: float = 2.0
    toy_h2: float = 2.0
    toy_a: float = 1.0
    toy_start_offset: float = 2.0
    # single-index family
    si_n: int = 1000
    si_p: int = 2
    si_m: int = 6
    si_sigma: float = 0.5
    si_s_x: float = 1.0
    si_theta_angle: float = 0.3
    si_eta_star: tuple = (1.0, -0.8, 0.9, -0.7, 0.6, 0.8)
    si_grid_n: int = 512  # grid spacing must undercut the link's oscillation scale
    si_r_cov: int = 200
    si_constrain: bool = False
    si_genus: int = 7
    # dimension sweep
    sweep_n: tuple = (250, 1000)
    sweep_m: tuple = (3, 6)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps >= 1 required")
        if self.family not in ("toy", "single-index"):
            raise ValueError(f"unknown family {self.family!r}")


def toy_blocks(cfg: ExperimentConfig) -> BlockInformation:
    p, m = cfg.toy_p, cfg.toy_m
    A = np.zeros((p, m))
    for i in range(min(p, m)):
        A[i, i] = cfg.toy_a
    return BlockInformation(
        D2=cfg.toy_d2 * np.eye(p), A=A, H2=cfg.toy_h2 * np.eye(m)
    )


def si_theta_star(cfg: ExperimentConfig):
    p = cfg.si_p
    if p == 1:
        return np.array([1.0])
    th = np.zeros(p)
    th[0] = math.cos(cfg.si_theta_angle)
    th[1] = math.sin(cfg.si_theta_angle)
    return th / np.linalg.norm(th)


@dataclass
class ExperimentContext:
    """Shared per-configuration state: truth, information blocks, step count."""

    cfg: ExperimentConfig
    upsilon_star: ParameterPoint
    info: BlockInformation
    cov: BlockInformation
    nu: float
    D_full: np.ndarray  # SPD root of the full information, used as the norm weight
    K: int
    basis: WaveletBasis | None = None
    cc_eff: ConditionConstants | None = None
    z_x: float | None = None
    R0: float | None = None


def build_context(cfg: ExperimentConfig) -> ExperimentContext:
    if cfg.family == "toy":
        F2 = toy_blocks(cfg)
        star = ParameterPoint(np.zeros(cfg.toy_p), np.zeros(cfg.toy_m))
        info = cov = F2
        basis = None
    else:
        theta_star = si_theta_star(cfg)
        eta_star = np.asarray(cfg.si_eta_star, dtype=float)
        if eta_star.size != cfg.si_m:
            raise ValueError("si_eta_star length must equal si_m")
        basis = WaveletBasis(m=cfg.si_m, s_X=cfg.si_s_x, genus=cfg.si_genus)
        probe = generate(
            cfg.si_n, cfg.si_p, theta_star, eta_star, cfg.si_sigma, cfg.si_s_x,
            seed=derive_seed(cfg.master_seed, 999_983), basis=basis,
        )
        model = SingleIndexModel(probe, basis, constrain_theta=cfg.si_constrain)
        iat = model.information_at_truth(
            r_datasets=cfg.si_r_cov,
            seed=derive_seed(cfg.master_seed, 999_979),
        )
        star, info, cov = iat.upsilon_star, iat.info, iat.cov
    nu = coupling_norm(info)
    D_full = sqrt_spd(info.full())
    cc_eff, z_x, R0 = _bound_inputs(cfg, nu, star, D_full)
    K = cfg.steps
    if K is None:
        if R0 is None:
            K = 30
        else:
            z = cfg.z_target if cfg.z_target is not None else z_x
            # the rule counts linear-contraction steps; keep a floor of 3 so
            # the nonlinear first phase after a grid start is crossed as well
            K = max(3, min(stopping_steps(z, R0, nu), 200))
    return ExperimentContext(
        cfg=cfg, upsilon_star=star, info=info, cov=cov, nu=nu,
        D_full=D_full, K=K, basis=basis, cc_eff=cc_eff, z_x=z_x, R0=R0,
    )


def _bound_inputs(cfg, nu, star, D_full):
    """Effective condition constants, z(x), and the concentration radius R0,
    with a pilot replication supplying the initial-guess radius."""
    cc = cfg.cc
    if cfg.family == "single-index" and cc.omega == 0.0:
        # i.i.d. default when no gradient-roughness constant is supplied
        cc = replace(cc, omega=1.0 / math.sqrt(cfg.si_n))
    if not 0.0 < nu < 1.0:
        return cc, None, None
    p_star = star.p_star
    z_x = combined_quantile(cfg.x, p_star, cc=cc)
    _, start = _make_replication(cfg, None, 999_931)
    R_K = max(z_x, float(np.linalg.norm(D_full @ (start.as_vector() - star.as_vector()))))
    K0 = initial_level_K0(R_K, cfg.x, cc, z_x)
    R0 = concentration_radius_R0(cfg.x, K0, p_star, cc, nu, z_x)
    return cc, z_x, R0


def _make_replication(cfg: ExperimentConfig, ctx, rep_index):
    """Build the model and the start point for one replication."""
    seed = derive_seed(cfg.master_seed, rep_index)
    if cfg.family == "toy":
        F2 = ctx.info if ctx is not None else toy_blocks(cfg)
        star = ctx.upsilon_star if ctx is not None else ParameterPoint(
            np.zeros(cfg.toy_p), np.zeros(cfg.toy_m)
        )
        model = simulate(F2, star, seed=seed)
        v0 = star.as_vector() + cfg.toy_start_offset
        start = ParameterPoint.from_vector(v0, star.p)
        return model, start
    theta_star = ctx.upsilon_star.theta if ctx is not None else si_theta_star(cfg)
    eta_star = np.asarray(cfg.si_eta_star, dtype=float)
    basis = ctx.basis if ctx is not None else WaveletBasis(
        m=cfg.si_m, s_X=cfg.si_s_x, genus=cfg.si_genus
    )
    dataset = generate(
        cfg.si_n, cfg.si_p, theta_star, eta_star, cfg.si_sigma, cfg.si_s_x,
        seed=seed, basis=basis,
    )
    model = SingleIndexModel(dataset, basis, constrain_theta=cfg.si_constrain)
    start, _tau = grid_init(dataset, basis, cfg.si_grid_n, noise_scale=model.noise_scale)
    return model, start


# ---------------------------------------------------------------------------
# experiment report
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    kind: str
    records: list
    aggregates: dict
    meta: dict

    def write(self, outdir):
        import os

        os.makedirs(outdir, exist_ok=True)
        rec_path = os.path.join(outdir, "records.csv")
        ok = [r for r in self.records if r.get("status") == "ok"]
        cols = sorted({k for r in self.records for k in r})
        with open(rec_path, "w") as f:
            f.write(",".join(cols) + "\n")
            for r in sorted(self.records, key=lambda d: d["rep"]):
                f.write(",".join(repr(r.get(c, "")) for c in cols) + "\n")
        with open(os.path.join(outdir, "summary.kv"), "w") as f:
            for k in sorted(self.meta):
                f.write(f"meta_{k} = {self.meta[k]!r}\n")
            for k in sorted(self.aggregates):
                f.write(f"{k} = {self.aggregates[k]!r}\n")
        return rec_path


def _run_replications(cfg, worker):
    indices = list(range(cfg.reps))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(worker, indices))
    else:
        results = [worker(i) for i in indices]
    failures = [r for r in results if r.get("status") != "ok"]
    if len(failures) > 0.05 * cfg.reps:
        raise HarnessError(
            f"{len(failures)} of {cfg.reps} replications failed (>5% budget): "
            f"first failure: {failures[0].get('error')}"
        )
    return results


# ---------------------------------------------------------------------------
# Wilks / Fisher experiment
# ---------------------------------------------------------------------------

def run_wilks_fisher(config: ExperimentConfig) -> ExperimentReport:
    ctx = build_context(config)
    K = ctx.K
    star = ctx.upsilon_star
    acfg = AlternationConfig(
        max_steps=K, step_tolerance=0.0,
        solver_tolerance=config.solver_tolerance, norm_matrix=ctx.D_full,
    )

    def worker(i):
        try:
            model, start = _make_replication(config, ctx, i)
            gt, ge = model.gradient(star)
            score = efficient_score(ctx.info, gt, ge)
            xi2 = float(score.xi @ score.xi)
            L_star = model.evaluate(
                ParameterPoint(star.theta, eta_update(model, star.theta, acfg))
            )
            trace = run(model, start, acfg)
            rec = {"rep": i, "status": "ok", "xi_norm2": xi2,
                   "monotone_defect": trace.monotone_defect(),
                   "stop_reason": trace.stop_reason}
            steps = [r.step_norm for r in trace.records[1:]]
            rec["nu_hat"] = fit_contraction(
                [float("nan")] + steps, floor=max(steps[-1], 1e-300) if steps else None
            )
            for k in range(K + 1):
                r_k = trace.records[min(k, len(trace.records) - 1)]
                rec[f"fisher_{k}"] = fisher_residual(
                    ctx.info, score, r_k.point_kk.theta, star.theta
                )
                rec[f"wilks_{k}"] = 2.0 * (r_k.L_kk1 - L_star)
            rec["dist_final"] = float(
                np.linalg.norm(ctx.D_full @ (trace.final().as_vector() - star.as_vector()))
            )
            return rec
        except (SolverError, MonotoneViolationError, np.linalg.LinAlgError) as exc:
            return {"rep": i, "status": "failed", "error": str(exc)}

    records = _run_replications(config, worker)
    aggregates = aggregate_wilks_fisher(records, ctx)
    meta = {"family": config.family, "K": K, "nu": ctx.nu, "reps": config.reps,
            "p": star.p, "m": star.m, "x": config.x, "seed": config.master_seed,
            "threads": config.threads}
    return ExperimentReport("wilks_fisher", records, aggregates, meta)


def aggregate_wilks_fisher(records, ctx):
    ok = [r for r in records if r["status"] == "ok"]
    if not ok:
        raise HarnessError("no successful replications")
    K = ctx.K
    p = ctx.upsilon_star.p
    w_K = np.array([r[f"wilks_{K}"] for r in ok])
    xi2 = np.array([r["xi_norm2"] for r in ok])
    nu_hats = np.array([r["nu_hat"] for r in ok])
    nu_hat_median = (
        float(np.nanmedian(nu_hats)) if np.any(np.isfinite(nu_hats)) else float("nan")
    )
    agg = {
        "n_ok": len(ok),
        "n_failed": len(records) - len(ok),
        "wilks_mean": float(np.mean(w_K)),
        "wilks_se": float(np.std(w_K, ddof=1) / math.sqrt(len(ok))),
        "wilks_var": float(np.var(w_K, ddof=1)),
        "wilks_ks": ks_distance(w_K, p),
        "xi_norm2_mean": float(np.mean(xi2)),
        "xi_norm_median": float(np.median(np.sqrt(xi2))),
        "monotone_violations": int(sum(1 for r in ok if r["monotone_defect"] > 0.0)),
        "nu_hat_median": nu_hat_median,
        "nu": ctx.nu,
    }
    bounds_on = ctx.R0 is not None
    if bounds_on:
        cc = ctx.cc_eff
        p_star = ctx.upsilon_star.p_star
        sp_R0 = spread_parametric(ctx.R0, ctx.cfg.x, p_star, cc)
        tau_budget = C_nu(ctx.nu) * ctx.cfg.solver_tolerance
    for k in range(K + 1):
        fk = np.array([r[f"fisher_{k}"] for r in ok])
        wk = np.array([r[f"wilks_{k}"] for r in ok])
        agg[f"fisher_median_{k}"] = float(np.median(fk))
        agg[f"fisher_se_{k}"] = float(
            1.2533 * np.std(fk, ddof=1) / math.sqrt(len(ok))
        )  # ~SE of a median under normality
        agg[f"wilks_err_median_{k}"] = float(np.median(np.abs(wk - xi2)))
        if bounds_on:
            r_k = fisher_radius(k, ctx.cfg.x, ctx.nu, ctx.R0, ctx.z_x, sp_R0)
            bound = (
                spread_semiparametric(r_k, ctx.cfg.x, p_star, p, cc, ctx.nu)
                + tau_budget
            )
            agg[f"fisher_bound_{k}"] = bound
            agg[f"fisher_coverage_{k}"] = float(np.mean(fk <= bound))
    return agg


# ---------------------------------------------------------------------------
# convergence to the maximizer
# ---------------------------------------------------------------------------

def run_me_convergence(config: ExperimentConfig) -> ExperimentReport:
    ctx = build_context(config)
    K = ctx.K
    star = ctx.upsilon_star
    acfg = AlternationConfig(
        max_steps=K, step_tolerance=0.0,
        solver_tolerance=config.solver_tolerance, norm_matrix=ctx.D_full,
    )
    profile_cfg = replace(acfg, max_steps=max(4 * K, 120))

    def worker(i):
        try:
            model, start = _make_replication(config, ctx, i)
            me, _ = profile_estimate(model, profile_cfg, starts=[start])
            trace = run(model, start, acfg)
            me_v = me.as_vector()
            dists = [
                float(np.linalg.norm(ctx.D_full @ (r.point_kk.as_vector() - me_v)))
                for r in trace.records
            ]
            rec = {"rep": i, "status": "ok",
                   "monotone_defect": trace.monotone_defect()}
            for k, d in enumerate(dists):
                rec[f"dist_{k}"] = d
            rec["dist_final"] = dists[-1]
            rec["nu_hat"] = fit_contraction(dists)
            return rec
        except (SolverError, MonotoneViolationError, np.linalg.LinAlgError) as exc:
            return {"rep": i, "status": "failed", "error": str(exc)}

    records = _run_replications(config, worker)
    ok = [r for r in records if r["status"] == "ok"]
    if not ok:
        raise HarnessError("no successful replications")
    nu_hats = np.array([r["nu_hat"] for r in ok])
    any_rate = bool(np.any(np.isfinite(nu_hats)))
    agg = {
        "n_ok": len(ok),
        "n_failed": len(records) - len(ok),
        "nu": ctx.nu,
        "nu_hat_median": float(np.nanmedian(nu_hats)) if any_rate else float("nan"),
        "nu_hat_max": float(np.nanmax(nu_hats)) if any_rate else float("nan"),
        "dist_final_max": float(np.max([r["dist_final"] for r in ok])),
        "dist_final_median": float(np.median([r["dist_final"] for r in ok])),
        "monotone_violations": int(sum(1 for r in ok if r["monotone_defect"] > 0.0)),
    }
    meta = {"family": config.family, "K": ctx.K, "reps": config.reps,
            "seed": config.master_seed, "threads": config.threads,
            "solver_tolerance": config.solver_tolerance}
    return ExperimentReport("me_convergence", records, agg, meta)


# ---------------------------------------------------------------------------
# condition probe: local non-quadraticity delta(r)
# ---------------------------------------------------------------------------

def probe_delta(config: ExperimentConfig, r_grid, R=20, n_points=50, seed=571):
    """Monte Carlo estimate of the non-quadraticity map r -> delta_hat(r).

    The expected Hessian at each sampled shell point is estimated by
    averaging analytic Hessians over R fresh datasets; delta_hat(r) is the
    largest deviation of the normalized Hessian from the identity over
    n_points points sampled on the shell of radius r.
    """
    ctx = build_context(config)
    star_v = ctx.upsilon_star.as_vector()
    D0 = ctx.D_full
    p = ctx.upsilon_star.p
    out = {}
    for ri, r in enumerate(r_grid):
        worst = 0.0
        rng = derive_rng(seed, ri)
        for j in range(n_points):
            u = rng.standard_normal(star_v.size)
            u /= np.linalg.norm(u)
            v = star_v + r * np.linalg.solve(D0, u)
            point = ParameterPoint.from_vector(v, p)
            Hbar = np.zeros((star_v.size, star_v.size))
            for rep in range(R):
                model, _ = _make_replication(
                    config, ctx, 10_000_000 + ri * 100_000 + j * 1000 + rep
                )
                try:
                    Hbar += model.hessian(point)
                except Exception:
                    Hbar += np.nan
            Hbar /= R
            M = np.linalg.solve(D0, np.linalg.solve(D0, -Hbar).T)
            dev = float(np.linalg.norm(0.5 * (M + M.T) - np.eye(star_v.size), 2))
            worst = max(worst, dev)
        out[float(r)] = worst
    return out


# ---------------------------------------------------------------------------
# dimension sweep
# ---------------------------------------------------------------------------

def run_dimension_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Median Wilks error and Fisher residual over a (p*, n) grid."""
    rows = []
    records = []
    eta_pool = np.asarray(config.si_eta_star, dtype=float)
    for mi, m in enumerate(config.sweep_m):
        eta = eta_pool[:m] if eta_pool.size >= m else np.resize(eta_pool, m)
        for ni, n in enumerate(config.sweep_n):
            cell_cfg = replace(
                config, family="single-index", si_n=int(n), si_m=int(m),
                si_eta_star=tuple(eta),
                master_seed=config.master_seed,
            )
            rep = run_wilks_fisher(cell_cfg)
            K = rep.meta["K"]
            row = {
                "rep": mi * len(config.sweep_n) + ni,
                "status": "ok",
                "m": int(m),
                "n": int(n),
                "p_star": int(config.si_p + m),
                "K": K,
                "wilks_err_median": rep.aggregates[f"wilks_err_median_{K}"],
                "fisher_median": rep.aggregates[f"fisher_median_{K}"],
                "nu": rep.aggregates["nu"],
            }
            rows.append(row)
            records.append(row)
    agg = {}
    for mi, m in enumerate(config.sweep_m):
        cells = [r for r in rows if r["m"] == m]
        cells.sort(key=lambda r: r["n"])
        for a, b in zip(cells[:-1], cells[1:]):
            agg[f"err_decreases_m{m}_n{a['n']}_to_n{b['n']}"] = bool(
                b["wilks_err_median"] < a["wilks_err_median"]
            )
    meta = {"family": "single-index", "reps": config.reps,
            "seed": config.master_seed, "threads": config.threads,
            "sweep_n": list(config.sweep_n), "sweep_m": list(config.sweep_m)}
    return ExperimentReport("dimension_sweep", records, agg, meta)
