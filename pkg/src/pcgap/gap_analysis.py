"""Numerical verification of the predictive-causal gap at the linear level:
the 2D counterexample, the NZ-suboptimality gap and its measure robustness,
the boundary bifurcation in the coupling, the IB beta sweep, and the
160-configuration deterministic grid.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSignChange, StabilityViolation
from .lingauss import CovarianceSolution, DynamicsSpec, solve_covariance_closed_form
from .risk import (Encoder, RiskVariant, angular_profile, axis_angle_deg,
                   latent_risk)
from .rng import generator

__all__ = [
    "ParamPoint",
    "ETA0",
    "VerificationReport",
    "BifurcationResult",
    "RobustnessResult",
    "GridSweepResult",
    "delta_gap",
    "verify_counterexample",
    "measure_robustness",
    "find_bifurcation",
    "ib_sweep",
    "linear_grid_sweep",
    "grid_configs_160",
    "IB_BETAS",
]

# Default beta grid for the compression-prediction trade-off sweep.
IB_BETAS = (1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 1.0)

# Axis angle below which a profile minimum counts as sitting on the NZ axis.
_NZ_AXIS_TOL_RAD = 1e-6


@dataclass(frozen=True)
class ParamPoint:
    """Point eta = (a_s, c, a_e, q_s, q_e) in the upper-triangular family."""

    a_s: float
    c: float
    a_e: float
    q_s: float
    q_e: float

    def __post_init__(self):
        if not (abs(self.a_s) < 1 and abs(self.a_e) < 1 and self.q_s > 0 and self.q_e > 0):
            raise StabilityViolation(f"point outside the open domain U: {self}")

    def spec(self) -> DynamicsSpec:
        return DynamicsSpec.from_2d(self.a_s, self.a_e, self.c, self.q_s, self.q_e)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.a_s, self.c, self.a_e, self.q_s, self.q_e)


# Counterexample point of the closed-form analysis.
ETA0 = ParamPoint(a_s=0.05, c=-0.90, a_e=0.98, q_s=0.05, q_e=0.10)


@dataclass(frozen=True)
class VerificationReport:
    sigma: CovarianceSolution
    r_nz: float
    r_env: float
    r_star: float
    theta_star_deg: float
    delta: float
    nz_suboptimal: bool
    interior_optimum: bool


@dataclass(frozen=True)
class BifurcationResult:
    c_star: float
    bracket: tuple[float, float]
    second_derivative_at_zero: tuple[tuple[float, float], ...]
    theta_star_path: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class RobustnessResult:
    fraction: float
    n_samples: int
    n_resampled: int


def _closed_sigma(p: ParamPoint) -> CovarianceSolution:
    return solve_covariance_closed_form(p.spec())


def delta_gap(p: ParamPoint) -> float:
    """NZ-suboptimality gap: positive exactly when the NZ encoder is strictly
    worse than the pure-environment encoder."""
    sol = _closed_sigma(p)
    s11 = sol.sigma[0, 0]
    s12 = sol.sigma[0, 1]
    return s11 * s11 - (p.a_s * s11 + p.c * s12) ** 2 - p.q_e * s11


def verify_counterexample(p: ParamPoint) -> VerificationReport:
    spec = p.spec()
    cov = _closed_sigma(p)
    r_nz = latent_risk(Encoder.nz(2), spec, cov).value
    r_env = latent_risk(Encoder.env(), spec, cov).value
    profile = angular_profile(spec, cov, variant=RiskVariant.LATENT)
    theta_deg = axis_angle_deg(profile.argmin_theta)
    r_star = profile.argmin_value
    delta = delta_gap(p)
    interior = r_star < min(r_nz, r_env) - 1e-12 and 0.0 < theta_deg < 90.0
    return VerificationReport(sigma=cov, r_nz=r_nz, r_env=r_env, r_star=r_star,
                              theta_star_deg=theta_deg, delta=delta,
                              nz_suboptimal=delta > 0.0, interior_optimum=interior)


def measure_robustness(center: ParamPoint, radius: float, n_samples: int,
                       seed: int = 0) -> RobustnessResult:
    """Fraction of uniform samples in the L-infinity ball around center with
    delta > 0.  Samples leaving the open domain U are rejected and resampled
    (counted in n_resampled)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = generator(seed)
    c0 = np.array(center.as_tuple())
    positive = 0
    resampled = 0
    for _ in range(n_samples):
        while True:
            eta = c0 + rng.uniform(-radius, radius, size=5)
            a_s, c, a_e, q_s, q_e = eta
            if abs(a_s) < 1 and abs(a_e) < 1 and q_s > 0 and q_e > 0:
                break
            resampled += 1
        if delta_gap(ParamPoint(a_s, c, a_e, q_s, q_e)) > 0:
            positive += 1
    return RobustnessResult(fraction=positive / n_samples, n_samples=n_samples,
                            n_resampled=resampled)


def _second_deriv_at_zero(base: ParamPoint, c: float, h: float = 1e-5) -> float:
    p = ParamPoint(base.a_s, c, base.a_e, base.q_s, base.q_e)
    spec = p.spec()
    cov = _closed_sigma(p)

    def risk_at(theta: float) -> float:
        return latent_risk(Encoder.from_angle(theta), spec, cov).value

    return (risk_at(h) - 2.0 * risk_at(0.0) + risk_at(-h)) / (h * h)


def find_bifurcation(base: ParamPoint, c_lo: float, c_hi: float,
                     grid: int = 64) -> BifurcationResult:
    """Locate the coupling where the second angular derivative of the risk
    at theta=0 changes sign, bisected to a bracket narrower than 1e-8."""
    if grid < 16:
        raise ValueError("grid must be >= 16")
    cs = np.linspace(c_lo, c_hi, grid)
    d2 = np.array([_second_deriv_at_zero(base, c) for c in cs])

    theta_path = []
    for c in cs:
        p = ParamPoint(base.a_s, float(c), base.a_e, base.q_s, base.q_e)
        profile = angular_profile(p.spec(), _closed_sigma(p))
        theta_path.append((float(c), axis_angle_deg(profile.argmin_theta)))

    sign_change = None
    for i in range(grid - 1):
        if d2[i] == 0.0:
            sign_change = (cs[i], cs[i])
            break
        if d2[i] * d2[i + 1] < 0:
            sign_change = (cs[i], cs[i + 1])
            break
    if sign_change is None:
        raise NoSignChange(f"no sign change of d2R/dtheta2 in [{c_lo}, {c_hi}]")

    lo, hi = sign_change
    f_lo = _second_deriv_at_zero(base, lo)
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        f_mid = _second_deriv_at_zero(base, mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return BifurcationResult(c_star=0.5 * (lo + hi), bracket=(lo, hi),
                             second_derivative_at_zero=tuple((float(c), float(v)) for c, v in zip(cs, d2)),
                             theta_star_path=tuple(theta_path))


def ib_sweep(p: ParamPoint, betas=IB_BETAS) -> list[tuple[float, float, float]]:
    """Angular IB minimizer for each beta: (beta, theta_star_deg, ib_value).
    beta = 0 is allowed and reduces to the unregularized latent risk."""
    spec = p.spec()
    cov = _closed_sigma(p)
    out = []
    for beta in betas:
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        profile = angular_profile(spec, cov, variant=RiskVariant.IB, beta=float(beta))
        out.append((float(beta), axis_angle_deg(profile.argmin_theta), profile.argmin_value))
    return out


def grid_configs_160() -> list[ParamPoint]:
    """The 160-configuration deterministic grid: 40 diagonal, 60 negative-c,
    60 positive-c, all at q_s=0.05, q_e=0.10.  The exact values are this
    project's reconstruction (recorded here, and in the harness configs)."""
    q_s, q_e = 0.05, 0.10
    pts = []
    for a_s in (0.05, 0.3, 0.5, 0.7, 0.9):
        for a_e in (0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99):
            pts.append(ParamPoint(a_s, 0.0, a_e, q_s, q_e))
    pairs = [(a_s, a_e) for a_s in (0.05, 0.3, 0.5, 0.9)
             for a_e in (0.5, 0.7, 0.9, 0.95, 0.98)]
    for c in (-0.9, -0.6, -0.3, 0.3, 0.6, 0.9):
        for a_s, a_e in pairs:
            pts.append(ParamPoint(a_s, c, a_e, q_s, q_e))
    return pts


@dataclass(frozen=True)
class GridSweepResult:
    points: tuple[ParamPoint, ...]
    reports: tuple[VerificationReport, ...]
    fidelities: tuple[float, ...]

    @property
    def nz_optimal_flags(self) -> tuple[bool, ...]:
        return tuple(f > math.cos(_NZ_AXIS_TOL_RAD) for f in self.fidelities)

    def summary(self) -> dict:
        n = len(self.points)
        n_nz = sum(self.nz_optimal_flags)
        return {"n_configs": n, "n_nz_optimal": n_nz,
                "frac_suboptimal": (n - n_nz) / n}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["a_s", "a_e", "c", "q_s", "q_e", "r_nz", "r_env",
                         "r_star", "theta_star_deg", "fidelity", "nz_optimal"])
        for p, rep, fid, flag in zip(self.points, self.reports, self.fidelities,
                                     self.nz_optimal_flags):
            writer.writerow([p.a_s, p.a_e, p.c, p.q_s, p.q_e, rep.r_nz, rep.r_env,
                             rep.r_star, rep.theta_star_deg, fid, flag])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary())


def linear_grid_sweep(points: list[ParamPoint] | None = None) -> GridSweepResult:
    """Verification report plus fidelity |cos theta*| for every grid config."""
    if points is None:
        points = grid_configs_160()
    reports = []
    fids = []
    for p in points:
        rep = verify_counterexample(p)
        reports.append(rep)
        fids.append(abs(math.cos(math.radians(rep.theta_star_deg))))
    return GridSweepResult(points=tuple(points), reports=tuple(reports),
                           fidelities=tuple(fids))
