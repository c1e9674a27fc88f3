"""Predictive risk functionals for a fixed linear encoder.

Three variants: latent self-prediction (the primary objective), system
prediction (target is the next system coordinate), and the information
bottleneck objective (latent risk plus a log-variance compression penalty).
For 2D specs the angular risk profile over [0, pi) is the workhorse used
by the verification and sweep modules.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateVariance
from .lingauss import CovarianceSolution, DynamicsSpec

__all__ = [
    "Encoder",
    "RiskEvaluation",
    "RiskProfile",
    "RiskVariant",
    "latent_risk",
    "system_risk",
    "ib_objective",
    "evaluate_risk",
    "angular_profile",
    "axis_angle_deg",
    "linear_fidelity",
]

_VAR_FLOOR = 1e-14
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RiskVariant(str, Enum):
    LATENT = "latent"
    SYSTEM = "system"
    IB = "ib"


@dataclass(frozen=True)
class Encoder:
    """Unit-norm linear encoder; theta is defined only in 2D."""

    w: np.ndarray
    theta: float | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "w", w)
        norm = np.linalg.norm(w)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"encoder must be unit norm, got {norm}")
        if self.theta is not None:
            expected = np.array([math.cos(self.theta), math.sin(self.theta)])
            if w.shape != (2,) or np.max(np.abs(w - expected)) > 1e-12:
                raise ValueError("theta does not match w")

    @classmethod
    def from_angle(cls, theta: float) -> "Encoder":
        return cls(w=np.array([math.cos(theta), math.sin(theta)]), theta=float(theta))

    @classmethod
    def from_vector(cls, w: np.ndarray) -> "Encoder":
        w = np.asarray(w, dtype=float)
        return cls(w=w / np.linalg.norm(w))

    @classmethod
    def nz(cls, dim: int) -> "Encoder":
        """Axis-aligned system projector (1, 0, ..., 0)."""
        w = np.zeros(dim)
        w[0] = 1.0
        theta = 0.0 if dim == 2 else None
        return cls(w=w, theta=theta)

    @classmethod
    def env(cls) -> "Encoder":
        """Pure-environment direction (0, 1) in 2D."""
        return cls(w=np.array([0.0, 1.0]), theta=math.pi / 2)

    def canonical_sign(self) -> "Encoder":
        """Flip so the first nonzero coordinate is positive (risk is sign
        invariant, so this fixes a representative per line)."""
        w = self.w
        for v in w:
            if v != 0.0:
                if v < 0.0:
                    return Encoder.from_vector(-w)
                break
        return self


@dataclass(frozen=True)
class RiskEvaluation:
    value: float
    alpha_star: float
    variant: RiskVariant
    beta: float | None = None


@dataclass(frozen=True)
class RiskProfile:
    thetas: np.ndarray
    values: np.ndarray
    argmin_theta: float
    argmin_value: float

    def to_csv(self, spec: DynamicsSpec) -> str:
        buf = io.StringIO()
        buf.write(f"# spec={spec.to_json()}\n")
        buf.write("theta_rad,risk\n")
        for t, v in zip(self.thetas, self.values):
            buf.write(f"{t!r},{v!r}\n")
        return buf.getvalue()


def _variance_terms(enc: Encoder, spec: DynamicsSpec, cov: CovarianceSolution):
    w = enc.w
    sigma = cov.sigma
    if w.shape[0] != sigma.shape[0]:
        raise ValueError("encoder dimension does not match covariance")
    v = float(w @ sigma @ w)
    if v < _VAR_FLOOR:
        raise DegenerateVariance(f"latent variance {v} below floor")
    return w, sigma, v


def latent_risk(enc: Encoder, spec: DynamicsSpec, cov: CovarianceSolution) -> RiskEvaluation:
    """MSE of the best scalar predictor of the next latent value:
    w'Sw - (w'ASw)^2 / w'Sw."""
    w, sigma, v = _variance_terms(enc, spec, cov)
    g = float(w @ spec.a_matrix() @ sigma @ w)
    alpha = g / v
    return RiskEvaluation(value=v - g * g / v, alpha_star=alpha, variant=RiskVariant.LATENT)


def system_risk(enc: Encoder, spec: DynamicsSpec, cov: CovarianceSolution) -> RiskEvaluation:
    """MSE of predicting the next system coordinate from the latent value."""
    w, sigma, v = _variance_terms(enc, spec, cov)
    a = spec.a_matrix()
    c_sel = np.zeros(w.shape[0])
    c_sel[0] = 1.0
    p = float(c_sel @ a @ sigma @ w)
    alpha = p / v
    return RiskEvaluation(value=float(c_sel @ sigma @ c_sel) - p * p / v,
                          alpha_star=alpha, variant=RiskVariant.SYSTEM)


def ib_objective(enc: Encoder, spec: DynamicsSpec, cov: CovarianceSolution,
                 beta: float) -> RiskEvaluation:
    """Latent risk plus beta * log latent variance (natural log)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    base = latent_risk(enc, spec, cov)
    if beta == 0.0:
        return RiskEvaluation(value=base.value, alpha_star=base.alpha_star,
                              variant=RiskVariant.IB, beta=0.0)
    v = float(enc.w @ cov.sigma @ enc.w)
    return RiskEvaluation(value=base.value + beta * math.log(v),
                          alpha_star=base.alpha_star, variant=RiskVariant.IB, beta=beta)


def evaluate_risk(enc: Encoder, spec: DynamicsSpec, cov: CovarianceSolution,
                  variant: RiskVariant, beta: float = 0.0) -> RiskEvaluation:
    if variant == RiskVariant.LATENT:
        return latent_risk(enc, spec, cov)
    if variant == RiskVariant.SYSTEM:
        return system_risk(enc, spec, cov)
    return ib_objective(enc, spec, cov, beta)


def _profile_values(thetas: np.ndarray, spec: DynamicsSpec, cov: CovarianceSolution,
                    variant: RiskVariant, beta: float) -> np.ndarray:
    sigma = cov.sigma
    a = spec.a_matrix()
    w = np.stack([np.cos(thetas), np.sin(thetas)])  # (2, n)
    v = np.einsum("in,ij,jn->n", w, sigma, w)
    if variant == RiskVariant.SYSTEM:
        row = (a @ sigma)[0]  # c' A S
        p = row @ w
        return sigma[0, 0] - p * p / v
    asig = a @ sigma
    g = np.einsum("in,ij,jn->n", w, asig, w)
    vals = v - g * g / v
    if variant == RiskVariant.IB and beta > 0.0:
        vals = vals + beta * np.log(v)
    return vals


def _scalar_risk(theta: float, spec: DynamicsSpec, cov: CovarianceSolution,
                 variant: RiskVariant, beta: float) -> float:
    return float(_profile_values(np.array([theta]), spec, cov, variant, beta)[0])


def _golden_refine(f, lo: float, hi: float, tol: float = 1e-8) -> tuple[float, float]:
    c1 = hi - _GOLDEN * (hi - lo)
    c2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(c1), f(c2)
    while hi - lo > tol:
        if f1 < f2:
            hi, c2, f2 = c2, c1, f1
            c1 = hi - _GOLDEN * (hi - lo)
            f1 = f(c1)
        else:
            lo, c1, f1 = c1, c2, f2
            c2 = lo + _GOLDEN * (hi - lo)
            f2 = f(c2)
    mid = 0.5 * (lo + hi)
    return mid, f(mid)


def angular_profile(spec: DynamicsSpec, cov: CovarianceSolution,
                    variant: RiskVariant = RiskVariant.LATENT, beta: float = 0.0,
                    n_points: int = 4001) -> RiskProfile:
    """Risk over n_points equally spaced angles in [0, pi), with the argmin
    refined by golden-section search inside the bracketing interval."""
    if spec.n_env != 1:
        raise ValueError("angular profile requires a 2D spec")
    if n_points < 3:
        raise ValueError("n_points must be >= 3")
    thetas = np.linspace(0.0, math.pi, n_points, endpoint=False)
    values = _profile_values(thetas, spec, cov, variant, beta)
    i = int(np.argmin(values))
    h = math.pi / n_points

    def f(t: float) -> float:
        return _scalar_risk(t, spec, cov, variant, beta)

    theta_star, value_star = _golden_refine(f, thetas[i] - h, thetas[i] + h)
    theta_star %= math.pi
    return RiskProfile(thetas=thetas, values=values,
                       argmin_theta=theta_star, argmin_value=value_star)


def axis_angle_deg(theta: float) -> float:
    """Angle in degrees between the encoder line at theta and the system
    axis, folded to [0, 90]."""
    t = theta % math.pi
    return math.degrees(min(t, math.pi - t))


def linear_fidelity(w: np.ndarray) -> float:
    """Causal fidelity of a linear encoder: |w_s| / (|w_s| + ||w_e||)."""
    w = np.asarray(w, dtype=float)
    ws = abs(w[0])
    we = float(np.linalg.norm(w[1:]))
    return ws / (ws + we)
