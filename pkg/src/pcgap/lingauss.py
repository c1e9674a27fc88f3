"""Stable linear-Gaussian dynamics: construction, stationary covariance,
and trajectory sampling.

The dynamics are x_{t+1} = A x_t + xi_t with upper block-triangular A: a
scalar system mode a_s coupled by a row vector to N autonomous environment
modes, and diagonal noise covariance Q.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConvergenceFailure, InvalidNoise, StabilityViolation
from .rng import generator

__all__ = [
    "DynamicsSpec",
    "CovarianceSolution",
    "TrajectoryBatch",
    "SolveMethod",
    "spectral_radius",
    "solve_covariance_closed_form",
    "solve_covariance_general",
    "build_highdim_spec",
    "sample_trajectories",
    "sym_sqrt_psd",
]

_RESIDUAL_RTOL = 1e-10


class SolveMethod(str, Enum):
    CLOSED_FORM_2D = "closed_form_2d"
    FIXED_POINT = "fixed_point"
    DIRECT_VEC = "direct_vec"


@dataclass(frozen=True)
class DynamicsSpec:
    """Stable linear-Gaussian system in 2D or block (N+1)-D form."""

    a_s: float
    a_e_modes: tuple[float, ...]
    coupling: tuple[float, ...]
    q_s: float
    q_e: float

    def __post_init__(self):
        if len(self.a_e_modes) != len(self.coupling):
            raise ValueError("a_e_modes and coupling must have equal length")
        if len(self.a_e_modes) < 1:
            raise ValueError("at least one environment mode required")
        if self.q_s <= 0 or self.q_e <= 0:
            raise InvalidNoise(f"noise variances must be positive, got q_s={self.q_s}, q_e={self.q_e}")

    @classmethod
    def from_2d(cls, a_s: float, a_e: float, c: float, q_s: float, q_e: float) -> "DynamicsSpec":
        return cls(a_s=float(a_s), a_e_modes=(float(a_e),), coupling=(float(c),),
                   q_s=float(q_s), q_e=float(q_e))

    @property
    def n_env(self) -> int:
        return len(self.a_e_modes)

    @property
    def dim(self) -> int:
        return self.n_env + 1

    @property
    def a_e(self) -> float:
        if self.n_env != 1:
            raise ValueError("a_e is defined only for 2D specs")
        return self.a_e_modes[0]

    @property
    def c(self) -> float:
        if self.n_env != 1:
            raise ValueError("c is defined only for 2D specs")
        return self.coupling[0]

    @property
    def noise_ratio(self) -> float:
        """epsilon = q_s / q_e."""
        return self.q_s / self.q_e

    def a_matrix(self) -> np.ndarray:
        n = self.dim
        a = np.zeros((n, n))
        a[0, 0] = self.a_s
        a[0, 1:] = self.coupling
        a[np.arange(1, n), np.arange(1, n)] = self.a_e_modes
        return a

    def q_matrix(self) -> np.ndarray:
        return np.diag(np.concatenate(([self.q_s], np.full(self.n_env, self.q_e))))

    def satisfies_2d_stability_filter(self) -> bool:
        """Explicit filter |c| < 1 - max(|a_s|, |a_e|) used by the NN sweep grid."""
        if self.n_env != 1:
            raise ValueError("filter defined only for 2D specs")
        return abs(self.c) < 1.0 - max(abs(self.a_s), abs(self.a_e))

    def to_json(self) -> str:
        return json.dumps({
            "n_env": self.n_env,
            "a_s": self.a_s,
            "a_e_modes": list(self.a_e_modes),
            "coupling": list(self.coupling),
            "q_s": self.q_s,
            "q_e": self.q_e,
        })

    @classmethod
    def from_json(cls, text: str) -> "DynamicsSpec":
        obj = json.loads(text)
        if "a_e_modes" in obj:
            return cls(a_s=float(obj["a_s"]),
                       a_e_modes=tuple(float(v) for v in obj["a_e_modes"]),
                       coupling=tuple(float(v) for v in obj["coupling"]),
                       q_s=float(obj["q_s"]), q_e=float(obj["q_e"]))
        # compact 2D form
        return cls.from_2d(obj["a_s"], obj["a_e"], obj["c"], obj["q_s"], obj["q_e"])


@dataclass(frozen=True)
class CovarianceSolution:
    sigma: np.ndarray
    residual_norm: float
    method: SolveMethod

    def __post_init__(self):
        sig = self.sigma
        sym_err = np.linalg.norm(sig - sig.T) / (1.0 + np.linalg.norm(sig))
        if sym_err > 1e-12:
            raise ValueError(f"sigma not symmetric: relative asymmetry {sym_err:.2e}")


@dataclass(frozen=True)
class TrajectoryBatch:
    """states has shape (count, length, dim)."""

    states: np.ndarray
    seed: int
    dt_semantics: str = "discrete_map"

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def length(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]


def spectral_radius(spec: DynamicsSpec) -> float:
    """Exact spectral radius of the block-triangular A: max |diagonal entry|."""
    return max(abs(spec.a_s), max(abs(a) for a in spec.a_e_modes))


def _require_stable(spec: DynamicsSpec) -> None:
    rho = spectral_radius(spec)
    if rho >= 1.0:
        raise StabilityViolation(f"spectral radius {rho} >= 1")


def _residual(sigma: np.ndarray, a: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.norm(sigma - a @ sigma @ a.T - q, "fro"))


def solve_covariance_closed_form(spec: DynamicsSpec) -> CovarianceSolution:
    """Closed-form stationary covariance for the 2D upper-triangular system."""
    if spec.n_env != 1:
        raise ValueError("closed form requires a 2D spec (N=1)")
    _require_stable(spec)
    a_s, a_e, c = spec.a_s, spec.a_e, spec.c
    q_s, q_e = spec.q_s, spec.q_e
    s22 = q_e / (1.0 - a_e ** 2)
    s12 = c * a_e * q_e / ((1.0 - a_e ** 2) * (1.0 - a_s * a_e))
    s11 = (c * c * q_e * (1.0 + a_s * a_e) / ((1.0 - a_e ** 2) * (1.0 - a_s * a_e)) + q_s) / (1.0 - a_s ** 2)
    sigma = np.array([[s11, s12], [s12, s22]])
    res = _residual(sigma, spec.a_matrix(), spec.q_matrix())
    return CovarianceSolution(sigma=sigma, residual_norm=res, method=SolveMethod.CLOSED_FORM_2D)


def solve_covariance_general(spec: DynamicsSpec, *, rtol: float = 1e-13,
                             max_iter: int = 100_000) -> CovarianceSolution:
    """Stationary covariance for any stable spec.

    Direct vectorized solve (I - A (x) A) vec(sigma) = vec(Q) for small
    dimensions; for larger systems the Kronecker matrix is impractical and a
    squaring (doubling) accumulation of sum_k A^k Q A^k^T is used, falling
    back to the plain fixed-point iteration if squaring stalls.
    """
    _require_stable(spec)
    a = spec.a_matrix()
    q = spec.q_matrix()
    n = a.shape[0]
    if n <= 24:
        method = SolveMethod.DIRECT_VEC
        lhs = np.eye(n * n) - np.kron(a, a)
        sigma = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
    else:
        method = SolveMethod.FIXED_POINT
        sigma = _solve_doubling(a, q, rtol=rtol)
    sigma = 0.5 * (sigma + sigma.T)
    res = _residual(sigma, a, q)
    if res >= _RESIDUAL_RTOL * (1.0 + np.linalg.norm(sigma, "fro")):
        # doubling should always converge for rho < 1; iterate as a last resort
        sigma = _solve_fixed_point(a, q, rtol=rtol, max_iter=max_iter)
        sigma = 0.5 * (sigma + sigma.T)
        res = _residual(sigma, a, q)
    return CovarianceSolution(sigma=sigma, residual_norm=res, method=method)


def _solve_doubling(a: np.ndarray, q: np.ndarray, *, rtol: float) -> np.ndarray:
    sigma = q.copy()
    a_k = a.copy()
    for _ in range(200):
        nxt = sigma + a_k @ sigma @ a_k.T
        a_k = a_k @ a_k
        if np.linalg.norm(nxt - sigma, "fro") <= rtol * np.linalg.norm(nxt, "fro"):
            return nxt
        sigma = nxt
    return sigma


def _solve_fixed_point(a: np.ndarray, q: np.ndarray, *, rtol: float, max_iter: int) -> np.ndarray:
    sigma = q.copy()
    for _ in range(max_iter):
        nxt = a @ sigma @ a.T + q
        if np.linalg.norm(nxt - sigma, "fro") <= rtol * np.linalg.norm(nxt, "fro"):
            return nxt
        sigma = nxt
    raise ConvergenceFailure(f"fixed-point Lyapunov iteration exceeded {max_iter} iterations")


def build_highdim_spec(n_env: int, a_s: float, q_s: float, c: float, q_e: float) -> DynamicsSpec:
    """Block spec with N environment eigenvalues uniformly spaced in
    [0.3, 0.98] (inclusive endpoints) and coupling row c/sqrt(N)."""
    if n_env < 1:
        raise ValueError("n_env must be >= 1")
    if n_env == 1:
        modes = (0.98,)
    else:
        modes = tuple(np.linspace(0.3, 0.98, n_env))
    coupling = tuple(np.full(n_env, c / np.sqrt(n_env)))
    spec = DynamicsSpec(a_s=float(a_s), a_e_modes=modes, coupling=coupling,
                        q_s=float(q_s), q_e=float(q_e))
    _require_stable(spec)
    return spec


def sym_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; tolerates tiny
    negative eigenvalues from round-off by clipping them to zero."""
    evals, evecs = np.linalg.eigh(0.5 * (m + m.T))
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.T


def sample_trajectories(spec: DynamicsSpec, count: int, length: int, seed: int) -> TrajectoryBatch:
    """Trajectories started from the stationary distribution.

    Initial states are N(0, sigma) via the symmetric eigen-square-root of
    sigma; subsequent steps apply the map with N(0, Q) innovations.  Fully
    deterministic per (spec, seed).
    """
    if count < 1 or length < 1:
        raise ValueError("count and length must be >= 1")
    _require_stable(spec)
    sol = solve_covariance_general(spec)
    root = sym_sqrt_psd(sol.sigma)
    a = spec.a_matrix()
    noise_std = np.sqrt(np.diag(spec.q_matrix()))
    rng = generator(seed)
    dim = spec.dim
    states = np.empty((count, length, dim))
    states[:, 0, :] = rng.standard_normal((count, dim)) @ root.T
    for t in range(1, length):
        xi = rng.standard_normal((count, dim)) * noise_std
        states[:, t, :] = states[:, t - 1, :] @ a.T + xi
    return TrajectoryBatch(states=states, seed=seed)
