"""Duffing oscillator driven by a hidden Ornstein-Uhlenbeck environment.

The discrete map is the explicit Euler step

    s_{t+1} = s_t + (-alpha_s s_t - beta_s s_t^3 + gamma_se e_t + sigma_s xi_s) dt
    e_{t+1} = e_t + (-alpha_e e_t + sigma_e xi_e) dt

with i.i.d. standard normal innovations.  Note the noise enters scaled by dt,
like the drift, so this is a discrete map rather than an Euler-Maruyama SDE
step; sigma_s sqrt(dt) scaling would be the Ito-consistent alternative.

Metrics for a trained sequence predictor: environment dominance (does the
final recurrent state correlate more with the hidden drive than with the
observable?) and out-of-distribution MSE inflation under a shifted
environment.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import TaskFailed, TrajectoryBlowup, ZeroVariance
from .lingauss import TrajectoryBatch
from .neural import (TrainConfig, TrainedModel, _sliding_windows,
                     gru_hidden_states, gru_loss, train_gru)
from .rng import substream

__all__ = ["DuffingParams", "DominanceReport", "OODReport", "simulate",
           "env_dominance", "ood_inflation", "duffing_task",
           "ou_stationary_variance", "DUFFING_CSV_COLUMNS"]

_BLOWUP = 1e6

DUFFING_CSV_COLUMNS = ("alpha_e", "gamma_se", "grounded", "seed", "val_mse",
                       "max_corr_s", "max_corr_e", "ratio", "env_dominant",
                       "mse_id", "mse_ood", "inflation", "status")


@dataclass(frozen=True)
class DuffingParams:
    alpha_e: float
    gamma_se: float
    alpha_s: float = 0.5
    beta_s: float = 1.0
    sigma_s: float = 0.3
    sigma_e: float = 0.2
    dt: float = 0.05

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.alpha_e <= 0:
            raise ValueError("alpha_e must be positive")
        if self.sigma_s < 0 or self.sigma_e < 0:
            raise ValueError("sigma values must be nonnegative")


@dataclass(frozen=True)
class DominanceReport:
    max_corr_s: float
    max_corr_e: float
    ratio: float
    env_dominant: bool
    threshold: float


@dataclass(frozen=True)
class OODReport:
    mse_id: float
    mse_ood: float
    inflation: float
    shift: tuple[float, float] = (3.0, 2.0)


def ou_stationary_variance(params: DuffingParams) -> float:
    """Exact stationary variance of the environment Euler map
    e' = (1 - alpha_e dt) e + sigma_e dt xi."""
    a = 1.0 - params.alpha_e * params.dt
    if abs(a) >= 1.0:
        raise ValueError("environment map is not contracting at this dt")
    return (params.sigma_e * params.dt) ** 2 / (1.0 - a * a)


def simulate(params: DuffingParams, count: int, length: int, seed: int,
             s0: np.ndarray | None = None, e0: np.ndarray | None = None) -> TrajectoryBatch:
    """Trajectory batch of shape (count, length, 2) with channels (s, e).

    Initial (s0, e0) are N(0, 0.1^2) unless given explicitly; deterministic
    per (params, seed).
    """
    if count < 1 or length < 2:
        raise ValueError("count must be >= 1 and length >= 2")
    rng = substream(seed, 0)
    if s0 is None:
        s0 = 0.1 * rng.standard_normal(count)
    if e0 is None:
        e0 = 0.1 * rng.standard_normal(count)
    xi_s = rng.standard_normal((count, length - 1))
    xi_e = rng.standard_normal((count, length - 1))
    states, ok = kernels.duffing_path(
        np.asarray(s0, dtype=float), np.asarray(e0, dtype=float), xi_s, xi_e,
        params.alpha_s, params.beta_s, params.gamma_se, params.sigma_s,
        params.alpha_e, params.sigma_e, params.dt, _BLOWUP)
    if not ok:
        raise TrajectoryBlowup(f"|s| or |e| exceeded {_BLOWUP:g} during integration")
    return TrajectoryBatch(states=np.asarray(states), seed=seed, dt_semantics="euler")


def _pearson(h: np.ndarray, target: np.ndarray) -> np.ndarray:
    """|Pearson r| of each hidden unit (columns of h) against target.
    Constant hidden units carry no signal and score 0."""
    hc = h - h.mean(axis=0)
    tc = target - target.mean()
    t_norm = float(np.sqrt(np.sum(tc * tc)))
    h_norm = np.sqrt(np.sum(hc * hc, axis=0))
    out = np.zeros(h.shape[1])
    nz = h_norm > 1e-15
    out[nz] = np.abs(hc[:, nz].T @ tc) / (h_norm[nz] * t_norm)
    return out


def env_dominance(model: TrainedModel, test: TrajectoryBatch,
                  threshold: float = 1.00, correlate: str = "final") -> DominanceReport:
    """Per hidden unit, Pearson correlation across test trajectories between
    the final recurrent state and the final-time s (resp. e); environment
    dominant when max_j |r(h_j, e)| strictly exceeds threshold * max_j
    |r(h_j, s)|.  correlate="mean" uses time-averaged s and e instead."""
    if test.count < 10:
        raise ValueError("need at least 10 test trajectories")
    if correlate not in ("final", "mean"):
        raise ValueError("correlate must be 'final' or 'mean'")
    gru = model.model
    h_final = gru_hidden_states(gru, test.states)
    if correlate == "final":
        s = test.states[:, -1, 0]
        e = test.states[:, -1, 1]
    else:
        s = test.states.mean(axis=1)[:, 0]
        e = test.states.mean(axis=1)[:, 1]
    if np.std(s) < 1e-15 or np.std(e) < 1e-15:
        raise ZeroVariance("a correlate is constant across trajectories")
    max_s = float(np.max(_pearson(h_final, s)))
    max_e = float(np.max(_pearson(h_final, e)))
    if max_s < 1e-15:
        raise ZeroVariance("hidden state carries no variance against s")
    ratio = max_e / max_s
    return DominanceReport(max_corr_s=max_s, max_corr_e=max_e, ratio=ratio,
                           env_dominant=ratio > threshold, threshold=threshold)


def ood_inflation(model: TrainedModel, params: DuffingParams, count: int,
                  seed: int, length: int = 80, window_length: int = 20,
                  shift: tuple[float, float] = (3.0, 2.0)) -> OODReport:
    """MSE on fresh in-distribution trajectories versus trajectories from
    the shifted environment (alpha_e * shift[0], sigma_e * shift[1]),
    evaluated with the model's own prediction loss."""
    if count < 10:
        raise ValueError("count must be >= 10")
    gru = model.model
    shifted = replace(params, alpha_e=params.alpha_e * shift[0],
                      sigma_e=params.sigma_e * shift[1])
    batch_id = simulate(params, count, length, seed)
    batch_ood = simulate(shifted, count, length, seed + 1)
    win_id = _sliding_windows(batch_id.states, window_length)
    win_ood = _sliding_windows(batch_ood.states, window_length)
    mse_id = gru_loss(gru.params, win_id, gru.mode)
    mse_ood = gru_loss(gru.params, win_ood, gru.mode)
    return OODReport(mse_id=mse_id, mse_ood=mse_ood,
                     inflation=mse_ood / mse_id, shift=shift)


def duffing_task(alpha_e: float, gamma_se: float, grounded: bool, seed: int,
                 count: int = 40, length: int = 80, epochs: int = 60,
                 threshold: float = 1.00, ood_count: int = 200,
                 test_count: int = 200) -> dict:
    """Full nonlinear pipeline for one (alpha_e, gamma_se, mode, seed) cell:
    simulate, train the sequence predictor, then score dominance and OOD
    inflation.  Returns the metric row; raises TaskFailed around any inner
    error so sweeps can record the failure and continue."""
    mode = "grounded" if grounded else "unconstrained"
    try:
        params = DuffingParams(alpha_e=alpha_e, gamma_se=gamma_se)
        train_batch = simulate(params, count, length, seed)
        cfg = TrainConfig(learning_rate=1e-3, epochs=epochs, batch_size=64,
                          window_length=20, seed=seed)
        model = train_gru(train_batch, mode, cfg)
        test_batch = simulate(params, test_count, length, seed + 10_000)
        dom = env_dominance(model, test_batch, threshold=threshold)
        ood = ood_inflation(model, params, ood_count, seed + 20_000,
                            length=length, window_length=cfg.window_length)
    except Exception as exc:
        raise TaskFailed(f"duffing task (alpha_e={alpha_e}, gamma_se={gamma_se}, "
                         f"mode={mode}, seed={seed}) failed: {exc}") from exc
    return {
        "alpha_e": alpha_e,
        "gamma_se": gamma_se,
        "grounded": grounded,
        "seed": seed,
        "val_mse": model.best_validation_loss,
        "max_corr_s": dom.max_corr_s,
        "max_corr_e": dom.max_corr_e,
        "ratio": dom.ratio,
        "env_dominant": dom.env_dominant,
        "mse_id": ood.mse_id,
        "mse_ood": ood.mse_ood,
        "inflation": ood.inflation,
        "status": "ok",
    }
