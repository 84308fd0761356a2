"""Contract a statistical model must satisfy to be driven by the alternator.

A model wraps one realized dataset and exposes the random functional L, its
split gradient, and optional closed-form partial maximizers.  Optional
capabilities are declared, not discovered; the alternator dispatches on the
flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statcore import BlockInformation, ParameterPoint


class ModelDomainError(ValueError):
    """A point lies outside the model's admissible set; message names the constraint."""


class UnsupportedCapabilityError(RuntimeError):
    """An optional operation was requested from a model that does not provide it."""


@dataclass(frozen=True)
class ModelCapabilities:
    dims: tuple
    has_expected_functional: bool = False
    has_closed_form_eta_step: bool = False
    has_closed_form_theta_step: bool = False


@dataclass(frozen=True)
class InformationAtTruth:
    """Expected-Hessian blocks, gradient-covariance blocks, and the truth.

    `info` holds -Hessian of E[L] at the truth, `cov` holds Cov of the
    gradient at the truth; they coincide for correctly specified models but
    both are exposed for misspecification diagnostics.
    """

    info: BlockInformation
    cov: BlockInformation
    upsilon_star: ParameterPoint


class Model:
    """Base class; subclasses implement evaluate/gradient and declare capabilities."""

    @property
    def dims(self):
        raise NotImplementedError

    @property
    def capabilities(self) -> ModelCapabilities:
        raise NotImplementedError

    def evaluate(self, point: ParameterPoint) -> float:
        raise NotImplementedError

    def gradient(self, point: ParameterPoint):
        """Split gradient (grad_theta, grad_eta) of L at the point."""
        raise NotImplementedError

    # optional capabilities -------------------------------------------------

    def eta_argmax(self, theta):
        raise UnsupportedCapabilityError(type(self).__name__ + " has no closed-form eta step")

    def theta_argmax(self, eta, theta_init=None):
        raise UnsupportedCapabilityError(type(self).__name__ + " has no closed-form theta step")

    def hessian(self, point: ParameterPoint):
        raise UnsupportedCapabilityError(type(self).__name__ + " does not expose a Hessian")

    def expected_evaluate(self, point: ParameterPoint):
        raise UnsupportedCapabilityError(type(self).__name__ + " has no expected functional")

    def information_at_truth(self) -> InformationAtTruth:
        raise UnsupportedCapabilityError(
            type(self).__name__ + " has no known truth (simulation models only)"
        )

    def default_start(self) -> ParameterPoint:
        raise UnsupportedCapabilityError(type(self).__name__ + " provides no default start")


def finite_difference_gradient(model: Model, point: ParameterPoint, h=1e-6):
    """Central-difference split gradient of model.evaluate at the point."""
    v0 = point.as_vector()
    p = point.p
    g = np.zeros(v0.size)
    for j in range(v0.size):
        vp = v0.copy()
        vm = v0.copy()
        vp[j] += h
        vm[j] -= h
        fp = model.evaluate(ParameterPoint.from_vector(vp, p))
        fm = model.evaluate(ParameterPoint.from_vector(vm, p))
        g[j] = (fp - fm) / (2.0 * h)
    return g[:p], g[p:]


def gradient_check(model: Model, points, h=1e-6):
    """Max relative error between analytic and central-difference gradients."""
    worst = 0.0
    for pt in points:
        gt, ge = model.gradient(pt)
        ft, fe = finite_difference_gradient(model, pt, h=h)
        g = np.concatenate([gt, ge])
        f = np.concatenate([ft, fe])
        denom = max(float(np.linalg.norm(g)), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - f)) / denom)
    return worst
