"""Block-wise recursive rollout of a fixed-window forecaster.

A model mapping T input steps to L output steps is applied K = ceil(H/L)
times to reach an arbitrary horizon H. Each step's input is the most recent
T rows of the virtual sequence [observed history ; accumulated predictions]:
first all history (direct), then a history/prediction mix (semi
extrapolation), and finally predictions only (pure extrapolation).
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import AccumLengthMismatch, InsufficientTruth, NonFiniteBlock, ShapeMismatch
from .models import Forecaster


class Phase(enum.Enum):
    DIRECT = "direct"
    SEMI_EXTRAPOLATION = "semi_extrapolation"
    PURE_EXTRAPOLATION = "pure_extrapolation"


@dataclass(frozen=True)
class RolloutConfig:
    T: int
    L: int
    H: int

    def __post_init__(self):
        if self.T < 1 or self.L < 1 or self.H < 1:
            raise ValueError("T, L and H must all be >= 1")

    @property
    def n_blocks(self) -> int:
        return math.ceil(self.H / self.L)


@dataclass
class RolloutTrace:
    """Per-step record of a rollout: the blocks, their phases, and optionally
    the exact inputs that produced them."""

    blocks: list[np.ndarray]
    phases: list[Phase]
    inputs: list[np.ndarray] | None
    y_hat: np.ndarray


def phase_of(k: int, T: int, L: int) -> Phase:
    """Phase of step k (1-based): determined by the accumulated length (k-1)*L
    against T. The boundary (k-1)*L == T is pure extrapolation -- the history
    contribution is already empty there."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return Phase.DIRECT
    if (k - 1) * L < T:
        return Phase.SEMI_EXTRAPOLATION
    return Phase.PURE_EXTRAPOLATION


def build_block_input(
    x: np.ndarray, y_accum: np.ndarray, k: int, T: int, L: int
) -> np.ndarray:
    """Input of step k: the most recent T rows of [x ; y_accum].

    ``y_accum`` must hold exactly (k-1)*L accumulated prediction rows.
    """
    done = (k - 1) * L
    if y_accum.shape[0] != done:
        raise AccumLengthMismatch(
            f"step k={k} expects {done} accumulated rows, got {y_accum.shape[0]}"
        )
    phase = phase_of(k, T, L)
    if phase is Phase.DIRECT:
        return x
    if phase is Phase.SEMI_EXTRAPOLATION:
        return np.concatenate([x[done:T], y_accum], axis=0)
    return y_accum[done - T : done]


def teacher_forced_input(
    x: np.ndarray, y_true: np.ndarray, k: int, T: int, L: int
) -> np.ndarray:
    """Step-k input with the accumulated predictions replaced by ground truth."""
    done = (k - 1) * L
    if y_true.shape[0] < done:
        raise InsufficientTruth(
            f"step k={k} needs {done} ground-truth rows, got {y_true.shape[0]}"
        )
    return build_block_input(x, y_true[:done], k, T, L)


def rollout(
    model: Forecaster, x: np.ndarray, H: int, trace: bool = False
) -> RolloutTrace:
    """Generate an H-step prediction by iterating the model.

    ceil(H/L) blocks are produced in order and concatenated, then truncated
    to exactly H rows; with H <= L this is a single forward pass. A block
    containing NaN/Inf aborts with NonFiniteBlock carrying the partial trace.
    """
    T, L, C = model.spec.T, model.spec.L, model.spec.C
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (T, C):
        raise ShapeMismatch(f"input shape {x.shape} != (T={T}, C={C})")
    cfg = RolloutConfig(T, L, H)

    blocks: list[np.ndarray] = []
    phases: list[Phase] = []
    inputs: list[np.ndarray] | None = [] if trace else None
    y_accum = np.empty((0, C), dtype=np.float64)
    for k in range(1, cfg.n_blocks + 1):
        x_k = build_block_input(x, y_accum, k, T, L)
        block = model.predict(x_k)
        phases.append(phase_of(k, T, L))
        if inputs is not None:
            inputs.append(np.array(x_k, copy=True))
        if not np.isfinite(block).all():
            partial = RolloutTrace(blocks, phases, inputs, np.concatenate(blocks, axis=0)[:H] if blocks else np.empty((0, C)))
            raise NonFiniteBlock(k, trace=partial)
        blocks.append(block)
        y_accum = np.concatenate([y_accum, block], axis=0)
    return RolloutTrace(blocks, phases, inputs, y_accum[:H])


def trace_to_json(trace: RolloutTrace, cfg: RolloutConfig) -> dict:
    """Debug-dump schema: config, phase names, and block values."""
    return {
        "config": {"T": cfg.T, "L": cfg.L, "H": cfg.H, "n_blocks": cfg.n_blocks},
        "phases": [p.value for p in trace.phases],
        "blocks": [b.tolist() for b in trace.blocks],
    }


def save_trace(trace: RolloutTrace, cfg: RolloutConfig, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(trace_to_json(trace, cfg), fh)
        fh.write("\n")
    os.replace(tmp, path)
