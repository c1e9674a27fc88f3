"""Risk minimization over the unit sphere and the Bayes-optimal linear encoder.

The local method is projected gradient descent with Armijo backtracking and
renormalization after every step, restarted from seeded uniform directions;
the best local minimum over restarts is returned.  Analytic gradients are
validated against central finite differences at the returned solution, and
2D results are cross-checked against the angular-profile oracle.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NoConvergence, NotPSD
from .lingauss import CovarianceSolution, DynamicsSpec
from .risk import (Encoder, RiskEvaluation, RiskVariant, angular_profile,
                   evaluate_risk, linear_fidelity)
from .rng import substream

__all__ = ["EncoderSolution", "BayesSolution", "minimize_sphere",
           "sym_psd_sqrt", "bayes_optimal"]

_GRAD_TOL = 1e-9
_MODE_CODE = {RiskVariant.LATENT: 0, RiskVariant.SYSTEM: 1, RiskVariant.IB: 2}


@dataclass(frozen=True)
class EncoderSolution:
    encoder: Encoder
    risk: RiskEvaluation
    restarts_used: int
    converged_fraction: float
    fidelity: float

    def to_json(self) -> str:
        w = self.encoder.w
        theta_deg = None
        if w.shape[0] == 2:
            theta_deg = math.degrees(math.atan2(w[1], w[0]) % math.pi)
        return json.dumps({
            "w": list(w),
            "theta_deg": theta_deg,
            "risk": self.risk.value,
            "alpha_star": self.risk.alpha_star,
            "fidelity": self.fidelity,
            "restarts_used": self.restarts_used,
        })


@dataclass(frozen=True)
class BayesSolution:
    encoder: Encoder
    leading_eigenvalue: float
    m_matrix_condition: float
    degenerate_spectrum: bool


def _problem_matrices(spec: DynamicsSpec, cov: CovarianceSolution):
    sigma = cov.sigma
    a = spec.a_matrix()
    bmat = 0.5 * (a @ sigma + sigma @ a.T)
    c_sel = np.zeros(sigma.shape[0])
    c_sel[0] = 1.0
    u = sigma @ a.T @ c_sel
    css = float(sigma[0, 0])
    return sigma, bmat, u, css


def _fd_gradient(w, sigma, bmat, u, mode, beta, css, eps=1e-6):
    grad = np.empty_like(w)
    for i in range(w.shape[0]):
        wp = w.copy()
        wm = w.copy()
        wp[i] += eps
        wm[i] -= eps
        fp = kernels.sphere_objective(wp, sigma, bmat, u, mode, beta, css)
        fm = kernels.sphere_objective(wm, sigma, bmat, u, mode, beta, css)
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def minimize_sphere(spec: DynamicsSpec, cov: CovarianceSolution,
                    variant: RiskVariant = RiskVariant.LATENT, beta: float = 0.0,
                    restarts: int = 500, seed: int = 0,
                    max_iter: int = 20_000) -> EncoderSolution:
    """Best local minimum of the chosen risk over `restarts` projected-descent
    runs.  Raises NoConvergence if no restart reaches stationarity, or if the
    2D cross-check against the angular-profile minimum fails."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    sigma, bmat, u, css = _problem_matrices(spec, cov)
    dim = sigma.shape[0]
    mode = _MODE_CODE[variant]
    w0s = np.empty((restarts, dim))
    for k in range(restarts):
        w0s[k] = substream(seed, k).standard_normal(dim)
    ws, fs, conv = kernels.pgd_restarts(sigma, bmat, u, mode, float(beta), css,
                                        w0s, max_iter, _GRAD_TOL)
    if not conv.any():
        raise NoConvergence("no restart reached the stationarity tolerance")
    # best over converged restarts; never worse than any restart's final value
    conv_idx = np.flatnonzero(conv)
    best = conv_idx[np.argmin(fs[conv_idx])]
    w_best = ws[best]
    f_best = float(fs[best])

    analytic = kernels.sphere_gradient(w_best, sigma, bmat, u, mode, float(beta))
    fd = _fd_gradient(w_best, sigma, bmat, u, mode, float(beta), css)
    # near a stationary point both gradients sit at the finite-difference
    # noise floor (~eps_mach * |f| / step), so include that floor in the scale
    floor = 1e-4 * (1.0 + abs(f_best))
    rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd),
                                              np.linalg.norm(analytic), floor)
    if rel >= 1e-5:
        raise NoConvergence(f"gradient failed finite-difference validation: {rel:.2e}")

    if dim == 2:
        profile = angular_profile(spec, cov, variant=variant, beta=beta)
        if f_best > profile.argmin_value + 1e-9:
            raise NoConvergence(
                f"restarts missed the angular-grid minimum: {f_best} > {profile.argmin_value}")

    enc = Encoder.from_vector(w_best).canonical_sign()
    risk = evaluate_risk(enc, spec, cov, variant, beta)
    return EncoderSolution(encoder=enc, risk=risk, restarts_used=restarts,
                           converged_fraction=float(conv.mean()),
                           fidelity=linear_fidelity(enc.w))


def sym_psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root.  Eigenvalues in [-1e-12, 0) are clipped to
    zero; anything more negative raises NotPSD."""
    m = np.asarray(m, dtype=float)
    if np.linalg.norm(m - m.T) > 1e-12 * (1.0 + np.linalg.norm(m)):
        raise NotPSD("matrix is not symmetric")
    sym = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(sym)
    if evals.min() < -1e-8 * max(np.abs(evals).max(), 1.0):
        raise NotPSD(f"matrix has negative eigenvalue {evals.min()}")
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.T


def bayes_optimal(spec: DynamicsSpec, cov: CovarianceSolution) -> BayesSolution:
    """Leading eigenpair of M = sigma^{1/2} A' A sigma^{1/2}; the encoder is
    the normalized preimage sigma^{-1/2} u1 with canonical sign."""
    sigma = cov.sigma
    evals_s, evecs_s = np.linalg.eigh(sigma)
    if evals_s.min() <= 0:
        raise NotPSD("covariance is not positive definite")
    root = (evecs_s * np.sqrt(evals_s)) @ evecs_s.T
    inv_root = (evecs_s / np.sqrt(evals_s)) @ evecs_s.T
    a = spec.a_matrix()
    m = root @ a.T @ a @ root
    m = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(m)
    lam = float(evals[-1])
    u1 = evecs[:, -1]
    resid = np.linalg.norm(m @ u1 - lam * u1) / max(abs(lam), 1e-30)
    if resid >= 1e-10:
        raise NoConvergence(f"eigenpair residual {resid:.2e} too large")
    degenerate = False
    if evals.shape[0] >= 2:
        gap = abs(evals[-1] - evals[-2]) / max(abs(evals[-1]), 1e-30)
        degenerate = gap < 1e-10
    enc = Encoder.from_vector(inv_root @ u1).canonical_sign()
    cond = float(np.linalg.cond(m))
    return BayesSolution(encoder=enc, leading_eigenvalue=lam,
                         m_matrix_condition=cond, degenerate_spectrum=degenerate)
