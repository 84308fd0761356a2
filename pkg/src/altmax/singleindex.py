"""Single-index regression with a wavelet sieve for the link function.

Data: y_i = f(X_i' theta*) + eps_i with X_i uniform on the ball of radius
s_X, theta* on the half-sphere (first coordinate positive), and f a finite
combination of the wavelet sieve.  The fitted functional is the Gaussian
log-likelihood

    L(theta, eta) = -1/(2 sigma~^2) sum_i (y_i - sum_k eta_k e_k(X_i' theta))^2

with sigma~ the model's noise scale (the dataset's sigma when known and
positive, else 1), so that the Wilks statistic calibrates against chi^2.

The eta-step is linear least squares in closed form.  The theta-step is
implemented twice: constrained to the half-sphere (projected gradient
ascent with a normalization retraction, perturbed restarts and a tangent
Newton polish), and unconstrained in R^p (Newton ascent) for the local
Wilks/Fisher analysis where the finite sieve identifies the index scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .alternation import SolverError
from .modelapi import (
    InformationAtTruth,
    Model,
    ModelCapabilities,
    ModelDomainError,
    UnsupportedCapabilityError,
)
from .statcore import BlockInformation, ParameterPoint
from .wavelet import WaveletBasis


@dataclass(frozen=True)
class SingleIndexDataset:
    X: np.ndarray  # n x p, rows inside the ball of radius s_X
    y: np.ndarray
    s_X: float
    theta_star: np.ndarray | None = None
    eta_star: np.ndarray | None = None
    sigma: float | None = None
    seed: int | None = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join([f"X_{j+1}" for j in range(self.p)] + ["y"]) + "\n")
            for i in range(self.n):
                f.write(",".join(repr(v) for v in self.X[i]) + f",{self.y[i]!r}\n")


def _check_half_sphere(theta, name="theta_star"):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if abs(np.linalg.norm(theta) - 1.0) > 1e-9:
        raise ValueError(f"{name} must have unit norm, got ||.|| = {np.linalg.norm(theta)!r}")
    if theta[0] <= 0.0:
        raise ValueError(f"{name} must have positive first coordinate (half-sphere)")
    return theta


def uniform_ball(rng, n, p, radius):
    z = rng.standard_normal((n, p))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / p)
    return z * r[:, None]


def generate(n, p, theta_star, eta_star, sigma, s_X, seed, basis=None,
             genus=7, j_table=12) -> SingleIndexDataset:
    """Simulate a dataset; deterministic per seed.  f = sum_k eta_star_k e_k."""
    theta_star = _check_half_sphere(theta_star)
    if theta_star.size != p:
        raise ValueError("theta_star dimension does not match p")
    eta_star = np.atleast_1d(np.asarray(eta_star, dtype=float))
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if basis is None:
        basis = WaveletBasis(m=eta_star.size, s_X=s_X, genus=genus, j_table=j_table)
    rng = np.random.default_rng(seed)
    X = uniform_ball(rng, n, p, s_X)
    f = basis.synth(X @ theta_star, eta_star)
    eps = sigma * rng.standard_normal(n) if sigma > 0 else np.zeros(n)
    return SingleIndexDataset(
        X=X, y=f + eps, s_X=float(s_X), theta_star=theta_star,
        eta_star=eta_star, sigma=float(sigma), seed=seed,
    )


def basis_eval(basis: WaveletBasis, k, t):
    """e_k(t) by dyadic-table lookup with linear interpolation; 0 outside support."""
    return basis.eval_linear(k, t)


def eta_step_closed_form(dataset, basis, theta, ridge=0.0):
    """Normal-equations solution of the basis regression at fixed theta.

    Solves (1/n sum e e' + ridge I) eta = 1/n sum y_i e.  With ridge 0 a
    condition estimate above 1e12 triggers one fallback ridge of
    1e-8 * trace/m; a singular system after the fallback raises.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    E = basis.design(dataset.X @ theta)
    n = dataset.n
    G = E.T @ E / n
    b = E.T @ dataset.y / n
    m = G.shape[0]
    attempt = [ridge]
    if ridge == 0.0:
        attempt.append(1e-8 * np.trace(G) / m)
    last_exc = None
    for lam in attempt:
        Gl = G + lam * np.eye(m)
        try:
            if np.linalg.cond(Gl) > 1e12:
                raise np.linalg.LinAlgError("condition estimate above 1e12")
            return scipy.linalg.solve(Gl, b, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
            last_exc = exc
    raise SolverError(f"eta step singular even after ridge fallback: {last_exc}")


def _tangent_basis(theta):
    """Orthonormal basis of the tangent space of the unit sphere at theta."""
    p = theta.size
    M = np.eye(p) - np.outer(theta, theta)
    q, r = np.linalg.qr(M)
    cols = [q[:, i] for i in range(p) if abs(r[i, i]) > 1e-8]
    return np.column_stack(cols[: p - 1]) if cols else np.zeros((p, 0))


def theta_step(dataset, basis, eta, theta_init, gtol=1e-8, max_iter=400,
               restarts=5, noise_scale=1.0):
    """Local maximizer of L(., eta) on the half-sphere.

    Projected gradient ascent with normalization retraction and backtracking
    line search, followed by a tangent-space Newton polish; up to `restarts`
    perturbed restarts, best value returned.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    theta_init = np.atleast_1d(np.asarray(theta_init, dtype=float))
    p = theta_init.size
    if p == 1:
        return np.array([1.0])
    inv2s = 1.0 / (2.0 * noise_scale**2)
    X, y = dataset.X, dataset.y

    def value(th):
        r = y - basis.design(X @ th) @ eta
        return -inv2s * float(r @ r)

    def grad(th):
        t = X @ th
        r = y - basis.design(t) @ eta
        fp = basis.ddesign(t) @ eta
        return 2.0 * inv2s * (X.T @ (r * fp))

    def hess(th):
        t = X @ th
        r = y - basis.design(t) @ eta
        fp = basis.ddesign(t) @ eta
        fpp = basis.d2design(t) @ eta
        w = r * fpp - fp * fp
        return 2.0 * inv2s * ((X * w[:, None]).T @ X)

    def ascend(th0):
        th = th0 / np.linalg.norm(th0)
        if th[0] <= 0:
            th = -th
        L = value(th)
        alpha = 1.0 / (1.0 + np.linalg.norm(grad(th)))
        stalled = False
        for _ in range(max_iter):
            g = grad(th)
            rg = g - (g @ th) * th
            gn = np.linalg.norm(rg)
            if gn <= gtol * (1.0 + abs(L)):
                break
            accepted = False
            for _ in range(60):
                cand = th + alpha * rg
                cand /= np.linalg.norm(cand)
                if cand[0] <= 0:
                    alpha *= 0.5
                    continue
                Lc = value(cand)
                if Lc > L:
                    th, L = cand, Lc
                    alpha *= 1.6
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                stalled = True
                break
        # tangent Newton polish (Riemannian Hessian of the sphere).  Near the
        # optimum the value surface is flat to rounding, so candidates are
        # accepted on gradient-norm decrease with machine-noise value slack.
        noise = 64.0 * np.finfo(float).eps * (1.0 + abs(L))
        for _ in range(25):
            g = grad(th)
            rg = g - (g @ th) * th
            gn = np.linalg.norm(rg)
            if gn <= 1e-13 * (1.0 + abs(L)):
                break
            T = _tangent_basis(th)
            Hc = T.T @ (hess(th) - (g @ th) * np.eye(p)) @ T
            gc = T.T @ rg
            try:
                step = np.linalg.solve(Hc, -gc)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.linalg.eigvalsh(Hc) < 0):
                break
            moved = False
            scale = 1.0
            for _ in range(30):
                cand = th + T @ (scale * step)
                cand /= np.linalg.norm(cand)
                if cand[0] > 0:
                    Lc = value(cand)
                    gcand = grad(cand)
                    gn_cand = np.linalg.norm(gcand - (gcand @ cand) * cand)
                    if Lc > L or (Lc >= L - noise and gn_cand < gn):
                        th, L = cand, max(Lc, L)
                        moved = True
                        break
                scale *= 0.5
            if not moved:
                break
        return th, L, stalled

    rng = np.random.default_rng(1729)
    best = None
    diagnostics = []
    th0 = theta_init
    for attempt in range(restarts + 1):
        try:
            th, L, stalled = ascend(th0)
            diagnostics.append((attempt, L, stalled))
            if best is None or L > best[1]:
                best = (th, L)
        except FloatingPointError as exc:  # pragma: no cover
            diagnostics.append((attempt, None, str(exc)))
        pert = rng.standard_normal(p)
        ref = best[0] if best is not None else theta_init
        th0 = ref + 0.05 * pert / np.linalg.norm(pert)
    if best is None:
        raise SolverError(f"theta step failed on all restarts: {diagnostics}")
    return best[0]


def grid_init(dataset, basis, N, noise_scale=1.0):
    """Grid-search initialization on the half-sphere.

    Returns (ParameterPoint, tau) where tau is the maximal nearest-neighbor
    gap of the grid.  For each grid point the closed-form eta is computed and
    the best (theta, eta) by functional value is returned.
    """
    if N < 1:
        raise ValueError("grid size N must be >= 1")
    p = dataset.p
    if p == 1:
        grid = np.array([[1.0]])
    elif p == 2:
        ang = -np.pi / 2 + (np.arange(N) + 0.5) * np.pi / N
        grid = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        rng = np.random.default_rng(20170 + N)
        g = rng.standard_normal((N, p))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g[:, 0] = np.abs(g[:, 0])
        grid = g
    if grid.shape[0] == 1:
        tau = 0.0
    else:
        d2 = np.sum((grid[:, None, :] - grid[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        tau = float(np.sqrt(d2.min(axis=1)).max())
    inv2s = 1.0 / (2.0 * noise_scale**2)
    best = None
    for i in range(grid.shape[0]):
        th = grid[i]
        try:
            eta = eta_step_closed_form(dataset, basis, th)
        except SolverError:
            continue
        r = dataset.y - basis.design(dataset.X @ th) @ eta
        L = -inv2s * float(r @ r)
        if best is None or L > best[0]:
            best = (L, i, th, eta)
    if best is None:
        raise SolverError("eta step failed on every grid point")
    return ParameterPoint(best[2], best[3]), tau


class SingleIndexModel(Model):
    """Dataset-bound single-index model satisfying the model contract.

    constrain_theta=True keeps theta-updates on the half-sphere; False runs
    them unconstrained in R^p (the finite sieve identifies the scale
    locally), which is the mode used for Wilks/Fisher calibration.
    """

    def __init__(self, dataset: SingleIndexDataset, basis: WaveletBasis,
                 constrain_theta=True, noise_scale=None, eta_radius=None,
                 theta_cap=4.0, theta_gtol=1e-9):
        self.dataset = dataset
        self.basis = basis
        self.constrain_theta = bool(constrain_theta)
        if noise_scale is None:
            noise_scale = (
                dataset.sigma if dataset.sigma is not None and dataset.sigma > 0 else 1.0
            )
        self.noise_scale = float(noise_scale)
        if eta_radius is None:
            if dataset.eta_star is not None:
                eta_radius = max(10.0 * float(np.linalg.norm(dataset.eta_star)), 1.0)
            else:
                eta_radius = 1e3
        self.eta_radius = float(eta_radius)
        self.theta_cap = float(theta_cap)
        self.theta_gtol = float(theta_gtol)
        self._inv2s = 1.0 / (2.0 * self.noise_scale**2)

    @property
    def dims(self):
        return (self.dataset.p, self.basis.m)

    @property
    def capabilities(self):
        return ModelCapabilities(
            dims=self.dims,
            has_expected_functional=self.dataset.theta_star is not None,
            has_closed_form_eta_step=True,
            has_closed_form_theta_step=(self.dataset.p == 1 and self.constrain_theta),
        )

    def _check(self, point: ParameterPoint):
        if point.p != self.dataset.p or point.m != self.basis.m:
            raise ModelDomainError("point dimensions do not match the model")
        tn = float(np.linalg.norm(point.theta))
        if not np.isfinite(tn) or tn > self.theta_cap:
            raise ModelDomainError(
                f"theta norm {tn!r} outside the admissible cap {self.theta_cap}"
            )
        en = float(np.linalg.norm(point.eta))
        if not np.isfinite(en) or en > self.eta_radius * (1.0 + 1e-9):
            raise ModelDomainError(
                f"eta norm {en!r} outside the ball of radius {self.eta_radius}"
            )

    def _residual(self, point):
        t = self.dataset.X @ point.theta
        return t, self.dataset.y - self.basis.design(t) @ point.eta

    def evaluate(self, point):
        self._check(point)
        _, r = self._residual(point)
        return -self._inv2s * float(r @ r)

    def gradient(self, point):
        self._check(point)
        t, r = self._residual(point)
        E = self.basis.design(t)
        fp = self.basis.ddesign(t) @ point.eta
        g_eta = 2.0 * self._inv2s * (E.T @ r)
        g_theta = 2.0 * self._inv2s * (self.dataset.X.T @ (r * fp))
        return g_theta, g_eta

    def hessian(self, point):
        self._check(point)
        t, r = self._residual(point)
        X = self.dataset.X
        E = self.basis.design(t)
        dE = self.basis.ddesign(t)
        fp = dE @ point.eta
        fpp = self.basis.d2design(t) @ point.eta
        c = 2.0 * self._inv2s
        H_ee = -c * (E.T @ E)
        w = r * fpp - fp * fp
        H_tt = c * ((X * w[:, None]).T @ X)
        H_te = c * (X.T @ (dE * r[:, None] - E * fp[:, None]))
        top = np.hstack([H_tt, H_te])
        bot = np.hstack([H_te.T, H_ee])
        return np.vstack([top, bot])

    def eta_argmax(self, theta):
        eta = eta_step_closed_form(self.dataset, self.basis, theta)
        nrm = float(np.linalg.norm(eta))
        if nrm > self.eta_radius:
            eta = eta * (self.eta_radius / nrm)
        return eta

    def theta_argmax(self, eta, theta_init=None):
        p = self.dataset.p
        if theta_init is None:
            theta_init = np.zeros(p)
            theta_init[0] = 1.0
        if self.constrain_theta:
            return theta_step(
                self.dataset, self.basis, eta, theta_init,
                gtol=self.theta_gtol, noise_scale=self.noise_scale,
            )
        return self._theta_newton(np.asarray(eta, dtype=float),
                                  np.asarray(theta_init, dtype=float))

    def _theta_newton(self, eta, th):
        """Unconstrained Newton ascent in theta with backtracking; gradient fallback."""
        X, y = self.dataset.X, self.dataset.y

        def val(t):
            r = y - self.basis.design(X @ t) @ eta
            return -self._inv2s * float(r @ r)

        def grad(t):
            tt = X @ t
            r = y - self.basis.design(tt) @ eta
            fp = self.basis.ddesign(tt) @ eta
            return 2.0 * self._inv2s * (X.T @ (r * fp))

        def hess(t):
            tt = X @ t
            r = y - self.basis.design(tt) @ eta
            fp = self.basis.ddesign(tt) @ eta
            fpp = self.basis.d2design(tt) @ eta
            w = r * fpp - fp * fp
            return 2.0 * self._inv2s * ((X * w[:, None]).T @ X)

        L = val(th)
        alpha = 1.0
        for _ in range(200):
            g = grad(th)
            gn = float(np.linalg.norm(g))
            if gn <= self.theta_gtol * (1.0 + abs(L)):
                return th
            H = hess(th)
            use_newton = False
            try:
                if np.all(np.linalg.eigvalsh(H) < 0):
                    d = np.linalg.solve(H, -g)
                    use_newton = True
            except np.linalg.LinAlgError:
                pass
            if not use_newton:
                d = g / gn
            accepted = False
            scale = 1.0 if use_newton else alpha
            noise = 64.0 * np.finfo(float).eps * (1.0 + abs(L))
            for _ in range(60):
                cand = th + scale * d
                if np.linalg.norm(cand) >= self.theta_cap:
                    scale *= 0.5
                    continue
                Lc = val(cand)
                # near the optimum values are flat to rounding; Newton steps
                # are accepted on gradient-norm decrease instead
                gd = use_newton and Lc >= L - noise and float(
                    np.linalg.norm(grad(cand))
                ) < gn
                if Lc > L or gd:
                    th, L = cand, max(Lc, L)
                    accepted = True
                    if not use_newton:
                        alpha = min(scale * 1.6, 1e3)
                    break
                scale *= 0.5
            if not accepted:
                return th
        return th

    def information_at_truth(self, r_datasets=200, seed=None):
        """Monte Carlo estimate of -Hessian of E L and Cov of the gradient at truth.

        Averages analytic quantities over r_datasets fresh datasets of the
        same size; seeded and deterministic.
        """
        ds = self.dataset
        if ds.theta_star is None or ds.eta_star is None:
            raise UnsupportedCapabilityError(
                "information_at_truth requires a known truth (simulation models only)"
            )
        if seed is None:
            seed = (ds.seed or 0) + 7_777_777
        rng = np.random.default_rng(seed)
        n, p, m = ds.n, ds.p, self.basis.m
        D2 = np.zeros((p, p))
        A = np.zeros((p, m))
        H2 = np.zeros((m, m))
        grads = np.zeros((r_datasets, p + m))
        sig = ds.sigma if ds.sigma is not None else 0.0
        c = 1.0 / self.noise_scale**2
        for r in range(r_datasets):
            X = uniform_ball(rng, n, p, ds.s_X)
            t = X @ ds.theta_star
            E = self.basis.design(t)
            fp = self.basis.ddesign(t) @ ds.eta_star
            Jt = X * fp[:, None]
            D2 += c * (Jt.T @ Jt)
            A += c * (Jt.T @ E)
            H2 += c * (E.T @ E)
            eps = sig * rng.standard_normal(n) if sig > 0 else np.zeros(n)
            grads[r, :p] = c * (X.T @ (eps * fp))
            grads[r, p:] = c * (E.T @ eps)
        D2 /= r_datasets
        A /= r_datasets
        H2 /= r_datasets
        info = BlockInformation(D2=0.5 * (D2 + D2.T), A=A, H2=0.5 * (H2 + H2.T))
        if sig > 0:
            C = np.cov(grads.T, bias=False)
            C = np.atleast_2d(C)
            cov = BlockInformation(D2=C[:p, :p], A=C[:p, p:], H2=C[p:, p:])
        else:
            cov = BlockInformation(
                D2=np.zeros((p, p)), A=np.zeros((p, m)), H2=np.zeros((m, m))
            )
        star = ParameterPoint(ds.theta_star, ds.eta_star)
        return InformationAtTruth(info=info, cov=cov, upsilon_star=star)

    def expected_evaluate(self, point, n_mc=200_000, seed=1234):
        """Monte Carlo E L(point) = -n/(2s^2) (E[(f* - f_point)^2] + sigma^2)."""
        ds = self.dataset
        if ds.theta_star is None:
            raise UnsupportedCapabilityError("expected functional requires a known truth")
        rng = np.random.default_rng(seed)
        X = uniform_ball(rng, n_mc, ds.p, ds.s_X)
        fstar = self.basis.synth(X @ ds.theta_star, ds.eta_star)
        fhat = self.basis.synth(X @ point.theta, point.eta)
        sig2 = (ds.sigma or 0.0) ** 2
        return -ds.n * self._inv2s * (float(np.mean((fstar - fhat) ** 2)) + sig2)

    def default_start(self):
        pt, _ = grid_init(self.dataset, self.basis, N=64, noise_scale=self.noise_scale)
        return pt


def model_bind(dataset, basis, **kwargs) -> SingleIndexModel:
    """Bind a dataset and basis into a model satisfying the model contract."""
    return SingleIndexModel(dataset, basis, **kwargs)
