"""Exactly solvable linear-Gaussian model: the analytic oracle for the alternator.

Observation Y = upsilon_star + eps with eps ~ N(0, inv(F2)), functional
L(u) = -||F (u - Y)||^2 / 2.  Both partial maximizers are linear maps, so
every alternation iterate has a closed form and the contraction matrix and
its norm are exact.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .modelapi import InformationAtTruth, Model, ModelCapabilities, ModelDomainError
from .statcore import BlockInformation, ParameterPoint, coupling_norm, efficient_information, sqrt_spd


class ToyGaussianModel(Model):
    def __init__(self, F2: BlockInformation, upsilon_star: ParameterPoint, Y, seed=None):
        F2.validate()
        self.F2 = F2
        self.upsilon_star = upsilon_star
        self.Y = np.asarray(Y, dtype=float).copy()
        self.seed = seed
        if self.Y.size != upsilon_star.p_star:
            raise ValueError("Y dimension does not match upsilon_star")
        self._full = F2.full()
        self._p = F2.p

    @property
    def dims(self):
        return (self.F2.p, self.F2.m)

    @property
    def capabilities(self):
        return ModelCapabilities(
            dims=self.dims,
            has_expected_functional=True,
            has_closed_form_eta_step=True,
            has_closed_form_theta_step=True,
        )

    def _check(self, point):
        v = point.as_vector()
        if v.size != self.Y.size:
            raise ModelDomainError("point dimension does not match the model")
        if not np.all(np.isfinite(v)):
            raise ModelDomainError("point has non-finite coordinates")
        return v

    def evaluate(self, point):
        d = self._check(point) - self.Y
        return float(-0.5 * d @ (self._full @ d))

    def expected_evaluate(self, point):
        # E over eps: -||F(u - u*)||^2/2 - p*/2
        d = self._check(point) - self.upsilon_star.as_vector()
        return float(-0.5 * d @ (self._full @ d) - 0.5 * d.size)

    def gradient(self, point):
        g = -self._full @ (self._check(point) - self.Y)
        return g[: self._p], g[self._p :]

    def hessian(self, point):
        return -self._full

    def eta_argmax(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        y_th, y_et = self.Y[: self._p], self.Y[self._p :]
        return y_et - scipy.linalg.solve(self.F2.H2, self.F2.A.T @ (th - y_th), assume_a="pos")

    def theta_argmax(self, eta, theta_init=None):
        et = np.atleast_1d(np.asarray(eta, dtype=float))
        y_th, y_et = self.Y[: self._p], self.Y[self._p :]
        return y_th - scipy.linalg.solve(self.F2.D2, self.F2.A @ (et - y_et), assume_a="pos")

    def information_at_truth(self):
        # Cov(grad L(u*)) = F2 inv(F2) F2 = F2: information and covariance coincide.
        return InformationAtTruth(info=self.F2, cov=self.F2, upsilon_star=self.upsilon_star)

    def default_start(self):
        return ParameterPoint(np.zeros(self._p), np.zeros(self.F2.m))


def simulate(F2: BlockInformation, upsilon_star: ParameterPoint, seed, zero_noise=False):
    """Draw Y = upsilon_star + inv(F) z with z standard normal; deterministic per seed."""
    F2.validate()
    star = upsilon_star.as_vector()
    if zero_noise:
        return ToyGaussianModel(F2, upsilon_star, star, seed=seed)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(star.size)
    F = sqrt_spd(F2.full())
    Y = star + np.linalg.solve(F, z)
    return ToyGaussianModel(F2, upsilon_star, Y, seed=seed)


def contraction_matrix(F2: BlockInformation):
    """M0 = Ftheta^{-1} A Feta^{-2} A.T Ftheta^{-1} and its spectral norm (= nu)."""
    F2.validate()
    Fth = sqrt_spd(F2.D2)
    inner = F2.A @ scipy.linalg.solve(F2.H2, F2.A.T, assume_a="pos")
    M0 = np.linalg.solve(Fth, np.linalg.solve(Fth, inner).T)
    M0 = 0.5 * (M0 + M0.T)
    return M0, float(np.linalg.norm(M0, 2))


def exact_alternation(model: ToyGaussianModel, start: ParameterPoint, k: int) -> ParameterPoint:
    """Closed-form alternation iterate (theta_k, eta_k) after k full steps.

    theta_k - y_theta = M^k (theta_0 - y_theta) with M = D2^{-1} A H2^{-1} A.T,
    and eta_k is the eta-update at theta_{k-1}.  k = 0 returns the start.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return start
    p = model.F2.p
    y_th = model.Y[:p]
    M = scipy.linalg.solve(
        model.F2.D2,
        model.F2.A @ scipy.linalg.solve(model.F2.H2, model.F2.A.T, assume_a="pos"),
        assume_a="pos",
    )
    err = start.theta - y_th
    prev = err
    for _ in range(k):
        prev = err
        err = M @ err
    theta_k = y_th + err
    eta_k = model.eta_argmax(y_th + prev)
    return ParameterPoint(theta_k, eta_k)


def exact_profile(model: ToyGaussianModel):
    """Joint maximizer (= Y) and the profile curvature D2_eff of the F2 blocks."""
    p = model.F2.p
    point = ParameterPoint(model.Y[:p], model.Y[p:])
    return point, efficient_information(model.F2)


def coupling(model: ToyGaussianModel) -> float:
    return coupling_norm(model.F2)
