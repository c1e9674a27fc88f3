"""Desk-scale neural components with hand-written gradients.

Two models: a 2-layer ReLU MLP encoder trained jointly with a scalar
predictor gain on the latent self-prediction loss, and a single-layer GRU
sequence predictor trained by backpropagation through time.  All gradients
are analytic and validated by central finite differences (gradient_check).
Training is full 64-bit and deterministic per (data, config, seed).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AllDegenerate, DivergedLoss, HiddenStateOverflow
from .lingauss import TrajectoryBatch
from .rng import substream

__all__ = [
    "MLPEncoder", "GRUPredictor", "TrainConfig", "TrainedModel",
    "FidelityEstimate", "train_mlp_encoder", "train_gru",
    "finite_diff_fidelity", "gradient_check", "mlp_apply",
    "gru_hidden_states", "gru_predict",
]

HIDDEN_MLP = 64
HIDDEN_GRU = 32


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 2000
    batch_size: int = 64
    window_length: int = 20
    split_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.window_length < 2:
            raise ValueError("counts must be positive (window_length >= 2)")


@dataclass(frozen=True)
class MLPEncoder:
    """phi(x) = w2 @ relu(w1 @ x + b1) + b2, with joint predictor gain alpha."""
    params: dict

    @property
    def alpha(self) -> float:
        return float(self.params["alpha"][0])


@dataclass(frozen=True)
class GRUPredictor:
    """Single-layer GRU (reset gate applied to the hidden state before the
    candidate transform) with a linear readout."""
    params: dict
    mode: str  # "grounded" (1 output) or "unconstrained" (2 outputs)

    @property
    def hidden_size(self) -> int:
        return self.params["wz"].shape[0]


@dataclass(frozen=True)
class TrainedModel:
    model: MLPEncoder | GRUPredictor
    best_validation_loss: float
    loss_trace: tuple[float, ...]
    val_trace: tuple[float, ...]
    seed: int

    def params_json(self) -> str:
        out = {"seed": self.seed,
               "best_validation_loss": self.best_validation_loss,
               "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                          for k, v in self.model.params.items()}}
        if isinstance(self.model, GRUPredictor):
            out["mode"] = self.model.mode
        return json.dumps(out)

    def trace_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for i, (tr, va) in enumerate(zip(self.loss_trace, self.val_trace)):
            lines.append(f"{i},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    n_used: int
    n_excluded: int


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = shape if len(shape) == 2 else (shape[0], shape[0])
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _adam_update(params, grads, m_state, v_state, step, lr,
                 beta1=0.9, beta2=0.999, eps=1e-8):
    for key in params:
        g = grads[key]
        m_state[key] = beta1 * m_state[key] + (1.0 - beta1) * g
        v_state[key] = beta2 * v_state[key] + (1.0 - beta2) * g * g
        m_hat = m_state[key] / (1.0 - beta1 ** step)
        v_hat = v_state[key] / (1.0 - beta2 ** step)
        params[key] = params[key] - lr * m_hat / (np.sqrt(v_hat) + eps)


def _split_by_trajectory(n_traj: int, split_fraction: float):
    n_train = max(1, min(n_traj - 1, int(round(n_traj * split_fraction))))
    return np.arange(n_train), np.arange(n_train, n_traj)


# ---------------------------------------------------------------------------
# MLP encoder


def init_mlp(seed: int, hidden: int = HIDDEN_MLP, n_in: int = 2) -> MLPEncoder:
    rng = substream(seed, 0)
    params = {
        "w1": _glorot_uniform(rng, (hidden, n_in)),
        "b1": np.zeros(hidden),
        "w2": _glorot_uniform(rng, (1, hidden)),
        "b2": np.zeros(1),
        "alpha": np.zeros(1),
    }
    return MLPEncoder(params=params)


def mlp_apply(params: dict, x: np.ndarray) -> np.ndarray:
    """Encoder output for a batch of points, shape (m, 2) -> (m,)."""
    pre = x @ params["w1"].T + params["b1"]
    h = np.maximum(pre, 0.0)
    return (h @ params["w2"].T + params["b2"]).ravel()


def _mlp_forward_cache(params, x):
    pre = x @ params["w1"].T + params["b1"]
    h = np.maximum(pre, 0.0)
    y = (h @ params["w2"].T + params["b2"]).ravel()
    return y, pre, h


def _mlp_backprop(params, x, pre, h, dy):
    """Gradients of sum(dy * phi(x)) with respect to the MLP parameters."""
    d_w2 = dy[None, :] @ h
    d_b2 = np.array([dy.sum()])
    dh = dy[:, None] * params["w2"]
    dpre = dh * (pre > 0.0)
    d_w1 = dpre.T @ x
    d_b1 = dpre.sum(axis=0)
    return d_w1, d_b1, d_w2, d_b2


def mlp_loss_grad(params: dict, x_now: np.ndarray, x_next: np.ndarray):
    """Mean latent self-prediction loss and its analytic parameter gradients.

    Loss = mean_t (phi(x_{t+1}) - alpha * phi(x_t))^2.
    """
    m = x_now.shape[0]
    alpha = params["alpha"][0]
    y_now, pre_now, h_now = _mlp_forward_cache(params, x_now)
    y_next, pre_next, h_next = _mlp_forward_cache(params, x_next)
    err = y_next - alpha * y_now
    loss = float(np.mean(err * err))
    dy_next = 2.0 * err / m
    dy_now = -2.0 * alpha * err / m
    g1 = _mlp_backprop(params, x_next, pre_next, h_next, dy_next)
    g2 = _mlp_backprop(params, x_now, pre_now, h_now, dy_now)
    grads = {
        "w1": g1[0] + g2[0],
        "b1": g1[1] + g2[1],
        "w2": g1[2] + g2[2],
        "b2": g1[3] + g2[3],
        "alpha": np.array([float(np.mean(-2.0 * err * y_now))]),
    }
    return loss, grads


def mlp_loss(params: dict, x_now: np.ndarray, x_next: np.ndarray) -> float:
    alpha = params["alpha"][0]
    err = mlp_apply(params, x_next) - alpha * mlp_apply(params, x_now)
    return float(np.mean(err * err))


def _transitions(states: np.ndarray):
    x_now = states[:, :-1, :].reshape(-1, states.shape[2])
    x_next = states[:, 1:, :].reshape(-1, states.shape[2])
    return x_now, x_next


def train_mlp_encoder(batch: TrajectoryBatch, cfg: TrainConfig) -> TrainedModel:
    """Full-batch Adam on the joint (encoder, alpha) latent self-prediction
    loss; trajectories split 80/20, best-validation parameters retained."""
    if batch.length < 2:
        raise ValueError("trajectories must have length >= 2")
    train_idx, val_idx = _split_by_trajectory(batch.count, cfg.split_fraction)
    x_tr, xn_tr = _transitions(batch.states[train_idx])
    x_va, xn_va = _transitions(batch.states[val_idx])

    enc = init_mlp(cfg.seed)
    params = {k: v.copy() for k, v in enc.params.items()}
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}

    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    train_trace, val_trace = [], []
    for epoch in range(cfg.epochs):
        # overflow past float64 range is caught explicitly below, so the
        # intermediate inf/nan arithmetic need not warn
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = mlp_loss_grad(params, x_tr, xn_tr)
        if not np.isfinite(loss):
            raise DivergedLoss(f"training loss became non-finite at epoch {epoch}")
        _adam_update(params, grads, m_state, v_state, epoch + 1, cfg.learning_rate)
        with np.errstate(over="ignore", invalid="ignore"):
            val = mlp_loss(params, x_va, xn_va)
        train_trace.append(loss)
        val_trace.append(val)
        if val < best_val:
            best_val = val
            best_params = {k: v.copy() for k, v in params.items()}
    return TrainedModel(model=MLPEncoder(params=best_params),
                        best_validation_loss=float(best_val),
                        loss_trace=tuple(train_trace), val_trace=tuple(val_trace),
                        seed=cfg.seed)


def finite_diff_fidelity(encoder, points: np.ndarray, h: float = 1e-4) -> FidelityEstimate:
    """Mean causal fidelity |d phi/ds| / (|d phi/ds| + |d phi/de|) over the
    probe points, partials by centered differences.  Points where both
    partials are below 1e-12 are excluded (a fully collapsed encoder raises
    AllDegenerate)."""
    if h <= 0:
        raise ValueError("h must be positive")
    if isinstance(encoder, TrainedModel):
        encoder = encoder.model
    if isinstance(encoder, MLPEncoder):
        params = encoder.params
        fn = lambda x: mlp_apply(params, x)
    else:
        fn = encoder
    points = np.asarray(points, dtype=float)
    ds_plus = points + np.array([h, 0.0])
    ds_minus = points - np.array([h, 0.0])
    de_plus = points + np.array([0.0, h])
    de_minus = points - np.array([0.0, h])
    d_s = np.abs(fn(ds_plus) - fn(ds_minus)) / (2.0 * h)
    d_e = np.abs(fn(de_plus) - fn(de_minus)) / (2.0 * h)
    keep = (d_s >= 1e-12) | (d_e >= 1e-12)
    n_excluded = int((~keep).sum())
    if not keep.any():
        raise AllDegenerate("all probe points have vanishing sensitivity")
    fid = float(np.mean(d_s[keep] / (d_s[keep] + d_e[keep])))
    return FidelityEstimate(value=fid, n_used=int(keep.sum()), n_excluded=n_excluded)


# ---------------------------------------------------------------------------
# GRU predictor


def init_gru(seed: int, mode: str, hidden: int = HIDDEN_GRU, n_in: int = 2) -> GRUPredictor:
    if mode not in ("grounded", "unconstrained"):
        raise ValueError("mode must be 'grounded' or 'unconstrained'")
    n_out = 1 if mode == "grounded" else 2
    rng = substream(seed, 1)
    params = {}
    for gate in ("z", "r", "n"):
        params[f"w{gate}"] = _glorot_uniform(rng, (hidden, n_in))
        params[f"u{gate}"] = _glorot_uniform(rng, (hidden, hidden))
        params[f"b{gate}"] = np.zeros(hidden)
    params["wo"] = _glorot_uniform(rng, (n_out, hidden))
    params["bo"] = np.zeros(n_out)
    return GRUPredictor(params=params, mode=mode)


def _gru_args(params):
    return (params["wz"], params["uz"], params["bz"],
            params["wr"], params["ur"], params["br"],
            params["wn"], params["un"], params["bn"],
            params["wo"], params["bo"])


def _gru_targets(windows: np.ndarray, mode: str) -> np.ndarray:
    if mode == "grounded":
        return windows[:, 1:, :1]
    return windows[:, 1:, :]


def gru_loss_grad(params: dict, windows: np.ndarray, mode: str):
    targets = _gru_targets(windows, mode)
    preds, zs, rs, cs, hs = kernels.gru_forward(windows, *_gru_args(params))
    if not np.all(np.isfinite(hs)):
        raise HiddenStateOverflow("hidden state became non-finite")
    out = kernels.gru_backward(windows, targets, preds, zs, rs, cs, hs,
                               *_gru_args(params))
    loss = out[0]
    keys = ("wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn", "wo", "bo")
    grads = dict(zip(keys, out[1:]))
    return float(loss), grads


def gru_loss(params: dict, windows: np.ndarray, mode: str) -> float:
    targets = _gru_targets(windows, mode)
    preds, _, _, _, hs = kernels.gru_forward(windows, *_gru_args(params))
    if not np.all(np.isfinite(hs)):
        raise HiddenStateOverflow("hidden state became non-finite")
    err = preds - targets
    return float(np.sum(err * err) / err.size)


def gru_hidden_states(model: GRUPredictor, windows: np.ndarray) -> np.ndarray:
    """Final hidden state per window, shape (n_win, hidden)."""
    _, _, _, _, hs = kernels.gru_forward(windows, *_gru_args(model.params))
    return np.asarray(hs[-1])


def gru_predict(model: GRUPredictor, windows: np.ndarray) -> np.ndarray:
    preds, _, _, _, _ = kernels.gru_forward(windows, *_gru_args(model.params))
    return np.asarray(preds)


def _sliding_windows(states: np.ndarray, window_length: int) -> np.ndarray:
    count, length, dim = states.shape
    n_win = length - window_length + 1
    if n_win < 1:
        raise ValueError("trajectories too short for one window")
    idx = np.arange(window_length)[None, :] + np.arange(n_win)[:, None]
    return states[:, idx, :].reshape(count * n_win, window_length, dim)


def train_gru(batch: TrajectoryBatch, mode: str, cfg: TrainConfig) -> TrainedModel:
    """Mini-batch Adam over stride-1 sliding windows, BPTT gradients,
    80/20 split by trajectory, best-validation parameters retained."""
    train_idx, val_idx = _split_by_trajectory(batch.count, cfg.split_fraction)
    win_tr = _sliding_windows(batch.states[train_idx], cfg.window_length)
    win_va = _sliding_windows(batch.states[val_idx], cfg.window_length)

    gru = init_gru(cfg.seed, mode)
    params = {k: v.copy() for k, v in gru.params.items()}
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    rng = substream(cfg.seed, 2)

    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    train_trace, val_trace = [], []
    step = 0
    n_tr = win_tr.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_tr)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_tr, cfg.batch_size):
            mb = win_tr[order[start:start + cfg.batch_size]]
            loss, grads = gru_loss_grad(params, mb, mode)
            if not np.isfinite(loss):
                raise DivergedLoss(f"training loss became non-finite at epoch {epoch}")
            step += 1
            _adam_update(params, grads, m_state, v_state, step, cfg.learning_rate)
            epoch_loss += loss
            n_batches += 1
        val = gru_loss(params, win_va, mode)
        train_trace.append(epoch_loss / n_batches)
        val_trace.append(val)
        if val < best_val:
            best_val = val
            best_params = {k: v.copy() for k, v in params.items()}
    return TrainedModel(model=GRUPredictor(params=best_params, mode=mode),
                        best_validation_loss=float(best_val),
                        loss_trace=tuple(train_trace), val_trace=tuple(val_trace),
                        seed=cfg.seed)


# ---------------------------------------------------------------------------
# Gradient checking


def gradient_check(model, data, eps: float = 1e-6, max_coords: int = 256,
                   seed: int = 0) -> float:
    """Max relative error between analytic gradients and central finite
    differences of the loss.  Checks every coordinate up to max_coords,
    otherwise a seeded random subset of at least 64 coordinates."""
    if not 1e-8 <= eps <= 1e-4:
        raise ValueError("eps must be in [1e-8, 1e-4]")
    if isinstance(model, TrainedModel):
        model = model.model
    if isinstance(model, MLPEncoder):
        x_now, x_next = data
        params = {k: v.copy() for k, v in model.params.items()}
        _, grads = mlp_loss_grad(params, x_now, x_next)
        loss_fn = lambda p: mlp_loss(p, x_now, x_next)
    elif isinstance(model, GRUPredictor):
        windows = data
        params = {k: v.copy() for k, v in model.params.items()}
        _, grads = gru_loss_grad(params, windows, model.mode)
        loss_fn = lambda p: gru_loss(p, windows, model.mode)
    else:
        raise TypeError(f"unsupported model type {type(model)}")

    coords = [(k, i) for k, v in params.items() for i in range(v.size)]
    if len(coords) > max_coords:
        rng = substream(seed, 3)
        pick = rng.choice(len(coords), size=max(64, max_coords), replace=False)
        coords = [coords[i] for i in pick]

    worst = 0.0
    for key, i in coords:
        flat = params[key].ravel()
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = loss_fn(params)
        flat[i] = orig - eps
        f_minus = loss_fn(params)
        flat[i] = orig
        fd = (f_plus - f_minus) / (2.0 * eps)
        an = grads[key].ravel()[i]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        worst = max(worst, rel)
    return worst


def safe_relu_points(params: dict, rng: np.random.Generator, n_points: int,
                     sampler, margin: float = 1e-7, max_tries: int = 200) -> np.ndarray:
    """Sample points whose MLP pre-activations are all at least `margin` from
    zero, so the ReLU subgradient is unambiguous for finite differencing."""
    out = []
    for _ in range(max_tries):
        pts = sampler(rng, n_points)
        pre = pts @ params["w1"].T + params["b1"]
        good = np.min(np.abs(pre), axis=1) > margin
        out.extend(pts[good])
        if len(out) >= n_points:
            return np.array(out[:n_points])
    raise AllDegenerate("could not sample points away from ReLU kinks")
