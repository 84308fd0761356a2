"""Split-parameter data model and efficient-information algebra.

A semiparametric point is a pair (theta, eta) with dimensions (p, m).  The
local geometry around a reference point is carried by a symmetric block
matrix

    [[D2, A], [A.T, H2]]

whose theta-block Schur complement D2 - A H2^{-1} A.T is the efficient
information.  The squared spectral norm of D^{-1} A H^{-1} (D, H the SPD
square roots of the diagonal blocks) is the coupling coefficient `nu`; the
whole semiparametric calculus below is only defined when nu < 1.

All types are immutable after construction and all operations are pure, so
everything here is safe for concurrent use without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NotSPDError(ValueError):
    """A matrix that must be symmetric positive definite is not."""


class CouplingError(ValueError):
    """The coupling coefficient nu is >= 1; efficient quantities undefined."""


def _as_matrix(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {M.shape}")
    return M


def sqrt_spd(M, tol=1e-10):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-tol_abs, 0) are clipped to 0; an eigenvalue below
    -tol_abs raises NotSPDError.  tol is relative to the largest eigenvalue
    magnitude (with an absolute floor of 1e-10 for near-zero matrices).
    """
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-8 * (1.0 + np.abs(M).max())):
        raise NotSPDError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -tol * scale:
        raise NotSPDError(
            f"matrix has eigenvalue {w.min():.6e} below -{tol:g}*scale; not PSD"
        )
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def _check_spd(M, name):
    """Validate symmetry and strict positive definiteness; return min eigenvalue."""
    M = _as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NotSPDError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-8 * (1.0 + np.abs(M).max())):
        raise NotSPDError(f"{name} is not symmetric")
    wmin = float(np.linalg.eigvalsh(M).min())
    if wmin <= 0.0:
        raise NotSPDError(f"{name} is not SPD: smallest eigenvalue {wmin:.6e}")
    return wmin


@dataclass(frozen=True)
class ParameterPoint:
    """A split parameter upsilon = (theta, eta) of dimensions (p, m)."""

    theta: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        et = np.atleast_1d(np.asarray(self.eta, dtype=float)).copy()
        if th.ndim != 1 or et.ndim != 1:
            raise ValueError("theta and eta must be vectors")
        if th.size < 1 or et.size < 1:
            raise ValueError("p >= 1 and m >= 1 required")
        th.setflags(write=False)
        et.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "eta", et)

    @property
    def p(self):
        return self.theta.size

    @property
    def m(self):
        return self.eta.size

    @property
    def p_star(self):
        return self.theta.size + self.eta.size

    def as_vector(self):
        return np.concatenate([self.theta, self.eta])

    @staticmethod
    def from_vector(v, p):
        v = np.asarray(v, dtype=float).ravel()
        return ParameterPoint(v[:p], v[p:])


@dataclass(frozen=True)
class BlockInformation:
    """Block matrix [[D2, A], [A.T, H2]] with SPD diagonal blocks.

    Also used for covariance blocks (V2, B, Q2) when built from Cov of the
    gradient; the algebra is identical.
    """

    D2: np.ndarray
    A: np.ndarray
    H2: np.ndarray

    def __post_init__(self):
        D2 = _as_matrix(self.D2, "D2").copy()
        A = _as_matrix(self.A, "A").copy()
        H2 = _as_matrix(self.H2, "H2").copy()
        if A.shape != (D2.shape[0], H2.shape[0]):
            raise ValueError(
                f"A must be p x m = {D2.shape[0]} x {H2.shape[0]}, got {A.shape}"
            )
        for M in (D2, A, H2):
            M.setflags(write=False)
        object.__setattr__(self, "D2", D2)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "H2", H2)

    @property
    def p(self):
        return self.D2.shape[0]

    @property
    def m(self):
        return self.H2.shape[0]

    def validate(self):
        _check_spd(self.D2, "D2")
        _check_spd(self.H2, "H2")
        return self

    def full(self):
        """Assembled (p+m) x (p+m) block matrix."""
        top = np.hstack([self.D2, self.A])
        bot = np.hstack([self.A.T, self.H2])
        return np.vstack([top, bot])

    def full_sqrt(self):
        return sqrt_spd(self.full())


@dataclass(frozen=True)
class EfficientScore:
    """Projected gradient and its standardization xi = inv(sqrt(D2_eff)) @ breve_grad."""

    breve_grad: np.ndarray
    xi: np.ndarray


def coupling_norm(blocks: BlockInformation) -> float:
    """Coupling coefficient nu = ||D^{-1} A H^{-1}||^2 (squared spectral norm).

    D, H are the SPD square roots of the diagonal blocks.  nu >= 1 is allowed
    here (diagnostic output); downstream efficient-* operations reject it.
    """
    blocks.validate()
    D = sqrt_spd(blocks.D2)
    H = sqrt_spd(blocks.H2)
    K = np.linalg.solve(D, np.linalg.solve(H, blocks.A.T).T)
    s = np.linalg.svd(K, compute_uv=False)
    smax = float(s.max()) if s.size else 0.0
    return smax**2


def efficient_information(blocks: BlockInformation, require_spd=True) -> np.ndarray:
    """Efficient information D2 - A H2^{-1} A.T (theta-block Schur complement).

    Equals the inverse of the theta-block of the inverse of the full block
    matrix.  Requires nu < 1; a non-SPD result raises CouplingError.
    """
    nu = coupling_norm(blocks)
    if nu >= 1.0:
        raise CouplingError(f"coupling nu = {nu:.6g} >= 1; efficient information undefined")
    c, low = scipy.linalg.cho_factor(blocks.H2)
    X = scipy.linalg.cho_solve((c, low), blocks.A.T)
    Deff2 = blocks.D2 - blocks.A @ X
    Deff2 = 0.5 * (Deff2 + Deff2.T)
    if require_spd:
        wmin = float(np.linalg.eigvalsh(Deff2).min())
        if wmin <= 0.0:
            raise CouplingError(
                f"efficient information not SPD (min eigenvalue {wmin:.6e}); "
                "nu >= 1 or numerical breakdown"
            )
    return Deff2


def efficient_score(blocks: BlockInformation, grad_theta, grad_eta) -> EfficientScore:
    """Projected score grad_theta - A H2^{-1} grad_eta, standardized by sqrt of the
    efficient information."""
    gt = np.atleast_1d(np.asarray(grad_theta, dtype=float))
    ge = np.atleast_1d(np.asarray(grad_eta, dtype=float))
    if gt.size != blocks.p or ge.size != blocks.m:
        raise ValueError(
            f"gradient dims ({gt.size},{ge.size}) do not match blocks ({blocks.p},{blocks.m})"
        )
    c, low = scipy.linalg.cho_factor(blocks.H2)
    breve = gt - blocks.A @ scipy.linalg.cho_solve((c, low), ge)
    Deff = sqrt_spd(efficient_information(blocks))
    xi = np.linalg.solve(Deff, breve)
    return EfficientScore(breve_grad=breve, xi=xi)
