"""Block-coordinate (alternating) maximization engine.

From a start (theta_0, eta_0) the engine repeats: maximize over eta at the
current theta, then over theta at the new eta.  Iterates are indexed so that
point_kk = (theta_k, eta_k) with theta_k the fresh theta-maximizer, and
point_kk1 = (theta_k, eta_{k+1}); the functional is non-decreasing along the
interleaved sequence up to the inner-solver tolerance, which is enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .modelapi import Model, UnsupportedCapabilityError
from .statcore import (
    BlockInformation,
    EfficientScore,
    ParameterPoint,
    efficient_information,
    sqrt_spd,
)


class SolverError(RuntimeError):
    """Inner partial maximizer failed; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class MonotoneViolationError(RuntimeError):
    """A partial-maximization step decreased L beyond 10x the solver tolerance."""


class ProfileEstimateError(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AlternationConfig:
    max_steps: int = 30
    step_tolerance: float = 0.0  # 0 disables the early-stopping rule
    solver_tolerance: float = 1e-9
    norm_matrix: np.ndarray | None = None  # multiplied before the Euclidean norm

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps K >= 1 required")
        if self.solver_tolerance <= 0:
            raise ValueError("solver_tolerance must be > 0")
        if self.step_tolerance < 0:
            raise ValueError("step_tolerance must be >= 0")

    def weighted_norm(self, v):
        if self.norm_matrix is None:
            return float(np.linalg.norm(v))
        return float(np.linalg.norm(self.norm_matrix @ v))


@dataclass(frozen=True)
class TraceRecord:
    k: int
    point_kk: ParameterPoint
    point_kk1: ParameterPoint
    L_kk: float
    L_kk1: float
    step_norm: float  # ||D (u_kk - u_{k-1,k-1})||; nan at k = 0


@dataclass
class AlternatingTrace:
    records: list = field(default_factory=list)
    stop_reason: str = "max_steps"  # max_steps | tolerance | stationary
    synthesized_eta0: bool = False

    def __len__(self):
        return len(self.records)

    def point(self, k) -> ParameterPoint:
        return self.records[k].point_kk

    def final(self) -> ParameterPoint:
        return self.records[-1].point_kk

    def interleaved_values(self):
        """L(u_{0,1}), L(u_{1,1}), L(u_{1,2}), ... (monotone up to tolerance)."""
        out = []
        for rec in self.records:
            if rec.k > 0:
                out.append(rec.L_kk)
            out.append(rec.L_kk1)
        return out

    def monotone_defect(self):
        vals = self.interleaved_values()
        worst = 0.0
        for a, b in zip(vals[:-1], vals[1:]):
            worst = max(worst, a - b)
        return worst

    def to_csv(self, path):
        rec0 = self.records[0]
        p, m = rec0.point_kk.p, rec0.point_kk.m
        cols = (
            ["k"]
            + [f"theta_{i}" for i in range(p)]
            + [f"eta_{i}" for i in range(m)]
            + ["L_kk", "L_kk1", "step_norm"]
        )
        with open(path, "w") as f:
            f.write(",".join(cols) + "\n")
            for rec in self.records:
                row = (
                    [str(rec.k)]
                    + [repr(x) for x in rec.point_kk.theta]
                    + [repr(x) for x in rec.point_kk.eta]
                    + [repr(rec.L_kk), repr(rec.L_kk1), repr(rec.step_norm)]
                )
                f.write(",".join(row) + "\n")


def _numeric_coordinate_ascent(model, point, which, tol, max_iter=2000):
    """Generic backtracking gradient ascent in one block; fallback when the
    model provides no partial maximizer of its own."""
    v = point.as_vector().copy()
    p = point.p
    sl = slice(0, p) if which == "theta" else slice(p, None)
    step = 1.0
    L = model.evaluate(ParameterPoint.from_vector(v, p))
    for _ in range(max_iter):
        gt, ge = model.gradient(ParameterPoint.from_vector(v, p))
        g = gt if which == "theta" else ge
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return v[sl].copy()
        improved = False
        for _ in range(60):
            cand = v.copy()
            cand[sl] = v[sl] + step * g
            Lc = model.evaluate(ParameterPoint.from_vector(cand, p))
            if Lc > L:
                v, L = cand, Lc
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            return v[sl].copy()
    raise SolverError(
        f"{which}-block ascent did not converge within budget",
        last_iterate=ParameterPoint.from_vector(v, p),
    )


def eta_update(model: Model, theta, cfg: AlternationConfig | None = None, eta_init=None):
    """argmax over eta of L(theta, .) within the solver tolerance."""
    cfg = cfg or AlternationConfig()
    try:
        return np.asarray(model.eta_argmax(theta), dtype=float)
    except UnsupportedCapabilityError:
        pass
    p = np.atleast_1d(np.asarray(theta, dtype=float)).size
    m = model.dims[1]
    eta0 = np.zeros(m) if eta_init is None else np.asarray(eta_init, dtype=float)
    start = ParameterPoint(np.atleast_1d(np.asarray(theta, dtype=float)), eta0)
    return _numeric_coordinate_ascent(model, start, "eta", cfg.solver_tolerance)


def theta_update(model: Model, eta, cfg: AlternationConfig | None = None, theta_init=None):
    """argmax over theta of L(., eta) within the solver tolerance."""
    cfg = cfg or AlternationConfig()
    try:
        return np.asarray(model.theta_argmax(eta, theta_init=theta_init), dtype=float)
    except UnsupportedCapabilityError:
        pass
    p = model.dims[0]
    th0 = np.zeros(p) if theta_init is None else np.asarray(theta_init, dtype=float)
    start = ParameterPoint(th0, np.atleast_1d(np.asarray(eta, dtype=float)))
    return _numeric_coordinate_ascent(model, start, "theta", cfg.solver_tolerance)


def run(model: Model, start: ParameterPoint, cfg: AlternationConfig,
        synthesize_eta0=False) -> AlternatingTrace:
    """Run the alternation from `start` and capture the trace.

    With synthesize_eta0=True the supplied eta component is replaced by one
    eta-update before the sequence begins (for callers that only have a
    theta guess); the trace flags this.
    """
    trace = AlternatingTrace(synthesized_eta0=synthesize_eta0)
    theta = start.theta.copy()
    if synthesize_eta0:
        eta = eta_update(model, theta, cfg)
    else:
        eta = start.eta.copy()
    point = ParameterPoint(theta, eta)
    L0 = model.evaluate(point)
    eta_next = eta_update(model, theta, cfg, eta_init=eta)
    point01 = ParameterPoint(theta, eta_next)
    L01 = model.evaluate(point01)
    slack = 10.0 * cfg.solver_tolerance
    if L01 < L0 - slack:
        raise MonotoneViolationError(
            f"eta-update decreased L by {L0 - L01:.3e} (> {slack:.1e}) at k=0"
        )
    trace.records.append(TraceRecord(0, point, point01, L0, L01, float("nan")))
    prev_point = point
    prev_L = L01
    for k in range(1, cfg.max_steps + 1):
        eta_k = trace.records[-1].point_kk1.eta
        theta_k = theta_update(model, eta_k, cfg, theta_init=prev_point.theta)
        point_kk = ParameterPoint(theta_k, eta_k)
        L_kk = model.evaluate(point_kk)
        if L_kk < prev_L - slack:
            raise MonotoneViolationError(
                f"theta-update decreased L by {prev_L - L_kk:.3e} (> {slack:.1e}) at k={k}"
            )
        eta_next = eta_update(model, theta_k, cfg, eta_init=eta_k)
        point_kk1 = ParameterPoint(theta_k, eta_next)
        L_kk1 = model.evaluate(point_kk1)
        if L_kk1 < L_kk - slack:
            raise MonotoneViolationError(
                f"eta-update decreased L by {L_kk - L_kk1:.3e} (> {slack:.1e}) at k={k}"
            )
        step = cfg.weighted_norm(point_kk.as_vector() - prev_point.as_vector())
        trace.records.append(TraceRecord(k, point_kk, point_kk1, L_kk, L_kk1, step))
        prev_point = point_kk
        prev_L = L_kk1
        if step < cfg.solver_tolerance:
            trace.stop_reason = "stationary"
            return trace
        if cfg.step_tolerance > 0 and step < cfg.step_tolerance:
            trace.stop_reason = "tolerance"
            return trace
    trace.stop_reason = "max_steps"
    return trace


def profile_estimate(model: Model, cfg: AlternationConfig, starts=None):
    """Joint maximizer by running the alternation to stationarity from multi-start.

    Returns (point, trace) for the best start; selection is lexicographic by
    (value, start index), so the result is schedule-independent.
    """
    if starts is None:
        starts = [model.default_start()]
    long_cfg = replace(cfg, max_steps=max(cfg.max_steps, 200), step_tolerance=0.0)
    best = None
    diagnostics = []
    for i, s in enumerate(starts):
        try:
            trace = run(model, s, long_cfg)
            val = model.evaluate(trace.final())
            diagnostics.append((i, "ok", val))
            if best is None or val > best[0] + 0.0:
                best = (val, i, trace)
        except (SolverError, MonotoneViolationError) as exc:
            diagnostics.append((i, f"failed: {exc}", None))
    if best is None:
        raise ProfileEstimateError("all starts failed", diagnostics)
    return best[2].final(), best[2]


def wilks_statistic(model: Model, theta_k, theta_star, cfg: AlternationConfig | None = None):
    """2 (max_eta L(theta_k, .) - max_eta L(theta_star, .))."""
    cfg = cfg or AlternationConfig()
    th_k = np.atleast_1d(np.asarray(theta_k, dtype=float))
    th_s = np.atleast_1d(np.asarray(theta_star, dtype=float))
    Lk = model.evaluate(ParameterPoint(th_k, eta_update(model, th_k, cfg)))
    Ls = model.evaluate(ParameterPoint(th_s, eta_update(model, th_s, cfg)))
    return 2.0 * (Lk - Ls)


def fisher_residual(info: BlockInformation, score: EfficientScore, theta_k, theta_star):
    """|| Deff (theta_k - theta_star) - xi || with Deff the SPD root of the
    efficient information."""
    th_k = np.atleast_1d(np.asarray(theta_k, dtype=float))
    th_s = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if th_k.size != info.p or th_s.size != info.p:
        raise ValueError("theta dimensions do not match the information blocks")
    Deff = sqrt_spd(efficient_information(info))
    return float(np.linalg.norm(Deff @ (th_k - th_s) - score.xi))
