"""Model fitting: Adam, minibatch MSE over the full horizon, early stopping.

Training is the teacher-forced regime: every loss is computed on the first
prediction block only, against ground-truth targets. All randomness flows
through ``TrainConfig.shuffle_seed`` and the model's init seed, so identical
configurations reproduce bitwise-identical parameter trajectories.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import SeriesFrame, first_target_origin, gather_windows, window_origins
from .errors import LengthMismatch, NoTrainWindows, NoValWindows
from .models import Forecaster, SegmentSpec

# Minimum drop in validation loss that counts as an improvement; guards the
# patience counter against float noise.
IMPROVEMENT_EPS = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be > 0 and batch_size >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_val_mse(self) -> float:
        return self.epochs[self.best_epoch].val_mse


@dataclass
class AdamState:
    """First/second moment buffers plus the bias-correction step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(
    params: np.ndarray, grad: np.ndarray, state: AdamState, cfg: TrainConfig
) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns new parameters."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise LengthMismatch("params, grad and moment buffers must share one length")
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    return params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def mse_over_windows(
    model: Forecaster,
    frame: SeriesFrame,
    context_rows: int = 0,
    chunk: int = 256,
) -> float:
    """Exact full-horizon MSE over every stride-1 window of the frame."""
    T, L = model.spec.T, model.spec.L
    origins = window_origins(frame.n_steps, T, L, 1, context_rows)
    if origins.size == 0:
        raise NoValWindows(f"frame of {frame.n_steps} rows has no (T={T}, L={L}) window")
    sq_sum = 0.0
    count = 0
    for i in range(0, origins.size, chunk):
        X, Y = gather_windows(frame.values, origins[i : i + chunk], T, L)
        err = model.predict_batch(X) - Y
        sq_sum += float(np.sum(err * err))
        count += err.size
    return sq_sum / count


BatchHook = Callable[[int, int, np.ndarray, np.ndarray, np.ndarray], None]


def _fit(
    model: Forecaster,
    train_frame: SeriesFrame,
    val_frame: SeriesFrame,
    cfg: TrainConfig,
    val_context_rows: int = 0,
    batch_hook: BatchHook | None = None,
) -> TrainHistory:
    """Shared training loop.

    ``batch_hook(epoch, batch_index, X, Y, grad_all)`` runs on every minibatch
    before the parameter update; the update itself always uses the
    full-horizon gradient, so a hook observes training without perturbing it.
    """
    T, L = model.spec.T, model.spec.L
    train_origins = window_origins(train_frame.n_steps, T, L, 1)
    if train_origins.size == 0:
        raise NoTrainWindows(
            f"train frame of {train_frame.n_steps} rows has no (T={T}, L={L}) window"
        )
    val_origins = window_origins(val_frame.n_steps, T, L, 1, val_context_rows)
    if val_origins.size == 0:
        raise NoValWindows(
            f"val frame of {val_frame.n_steps} rows has no (T={T}, L={L}) window"
        )

    history = TrainHistory()
    full = SegmentSpec(0, L)

    if model.num_params == 0:
        start = time.perf_counter()
        train_mse = mse_over_windows(model, train_frame)
        val_mse = mse_over_windows(model, val_frame, val_context_rows)
        history.epochs.append(EpochRecord(0, train_mse, val_mse, time.perf_counter() - start))
        return history

    params = model.get_params().values
    state = AdamState.zeros(params.size)
    rng = np.random.default_rng(cfg.shuffle_seed)
    best_val = np.inf
    best_params = params.copy()
    epochs_since_improve = 0

    for epoch in range(cfg.max_epochs):
        start = time.perf_counter()
        perm = rng.permutation(train_origins.size)
        sq_total = 0.0
        n_total = 0
        for b_idx, lo in enumerate(range(0, perm.size, cfg.batch_size)):
            batch_origins = train_origins[perm[lo : lo + cfg.batch_size]]
            X, Y = gather_windows(train_frame.values, batch_origins, T, L)
            loss, grad = model.loss_and_grad((X, Y), full)
            if batch_hook is not None:
                batch_hook(epoch, b_idx, X, Y, grad.values)
            params = adam_step(params, grad.values, state, cfg)
            model.set_params(params)
            n_elems = X.shape[0] * L * model.spec.C
            sq_total += loss * n_elems
            n_total += n_elems
        val_mse = mse_over_windows(model, val_frame, val_context_rows)
        history.epochs.append(
            EpochRecord(epoch, sq_total / n_total, val_mse, time.perf_counter() - start)
        )
        if val_mse < best_val - IMPROVEMENT_EPS:
            best_val = val_mse
            best_params = params.copy()
            history.best_epoch = epoch
            epochs_since_improve = 0
        else:
            epochs_since_improve += 1
            if epochs_since_improve >= cfg.patience:
                history.stopped_early = True
                break

    model.set_params(best_params)
    return history


def train(
    model: Forecaster,
    train_frame: SeriesFrame,
    val_frame: SeriesFrame,
    cfg: TrainConfig,
    val_context_rows: int = 0,
) -> tuple[Forecaster, TrainHistory]:
    """Fit the model, monitor validation MSE, return it at its best epoch."""
    history = _fit(model, train_frame, val_frame, cfg, val_context_rows)
    return model, history


def write_history_csv(history: TrainHistory, path) -> None:
    """One row per epoch: epoch,train_mse,val_mse,seconds (9 sig. digits)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_mse,val_mse,seconds\n")
        for rec in history.epochs:
            fh.write(
                f"{rec.epoch},{rec.train_mse:.9g},{rec.val_mse:.9g},{rec.seconds:.9g}\n"
            )
    os.replace(tmp, path)
