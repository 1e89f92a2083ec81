"""Scoring, grid sweeps, win ratios, and the extreme-horizon stress test.

Two inference modes are scored:

* ``direct``    -- one forward pass, truncated to the evaluation horizon H
  (requires the model's output horizon L >= H).
* ``recursive`` -- block-wise rollout to any H, feeding predictions back in.

Metrics are computed over every test window at the configured stride as
global means over (windows x H steps x channels); the harness standardizes
data with train-split statistics before scoring, so reported values live in
z-scored space.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .data import (
    SeriesFrame,
    SplitSpec,
    apply_standardize,
    chronological_split,
    fit_standardize,
    gather_windows,
    window_origins,
)
from .errors import (
    HorizonExceedsData,
    ModeMismatch,
    NonFiniteBlock,
    NoTestWindows,
    NoTrainWindows,
    NoValWindows,
    ShapeMismatch,
    UnmatchedCell,
)
from .models import Forecaster, ForecasterSpec, build
from .training import TrainConfig, TrainHistory, train

MODE_DIRECT = "direct"
MODE_RECURSIVE = "recursive"
MODES = (MODE_DIRECT, MODE_RECURSIVE)

STATUS_OK = "ok"
STATUS_MODE_MISMATCH = "mode_mismatch"
STATUS_HORIZON_EXCEEDS_DATA = "horizon_exceeds_data"
STATUS_NON_FINITE_BLOCK = "non_finite_block"

_EVAL_CHUNK = 256


@dataclass(frozen=True)
class EvalConfig:
    mode: str
    T: int
    L: int
    H: int
    stride: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if min(self.T, self.L, self.H, self.stride) < 1:
            raise ValueError("T, L, H and stride must all be >= 1")


@dataclass(frozen=True)
class EvalRecord:
    model: str
    dataset: str
    T: int
    L: int
    H: int
    mode: str
    mse: float
    mae: float
    n_windows: int
    status: str = STATUS_OK


def _predict_horizon(model: Forecaster, X: np.ndarray, H: int, mode: str) -> np.ndarray:
    """Batched H-step predictions for stacked inputs X of shape (N, T, C)."""
    T, L = model.spec.T, model.spec.L
    if mode == MODE_DIRECT:
        return model.predict_batch(X)[:, :H, :]
    preds = np.empty((X.shape[0], H, model.spec.C), dtype=np.float64)
    cur = X
    filled = 0
    k = 0
    while filled < H:
        k += 1
        block = model.predict_batch(cur)
        if not np.isfinite(block).all():
            raise NonFiniteBlock(k)
        take = min(L, H - filled)
        preds[:, filled : filled + take, :] = block[:, :take, :]
        filled += take
        if filled < H:
            if L >= T:
                cur = block[:, L - T :, :]
            else:
                cur = np.concatenate([cur[:, L:, :], block], axis=1)
    return preds


def evaluate(
    model: Forecaster,
    test_frame: SeriesFrame,
    cfg: EvalConfig,
    context_rows: int = 0,
    model_id: str = "",
    dataset_id: str = "",
) -> EvalRecord:
    """Score the model over every (T, H) window of the test frame.

    Windows whose targets would fall inside borrowed context rows are
    skipped; error accumulation runs in origin order, so results do not
    depend on chunking.
    """
    if (cfg.T, cfg.L) != (model.spec.T, model.spec.L):
        raise ShapeMismatch(
            f"config (T={cfg.T}, L={cfg.L}) != model (T={model.spec.T}, L={model.spec.L})"
        )
    if cfg.mode == MODE_DIRECT and cfg.L < cfg.H:
        raise ModeMismatch(
            f"direct mode needs L >= H, got L={cfg.L} < H={cfg.H}; use recursive mode"
        )
    origins = window_origins(test_frame.n_steps, cfg.T, cfg.H, cfg.stride, context_rows)
    if origins.size == 0:
        raise NoTestWindows(
            f"test frame of {test_frame.n_steps} rows has no (T={cfg.T}, H={cfg.H}) window"
        )
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    for i in range(0, origins.size, _EVAL_CHUNK):
        X, Y = gather_windows(test_frame.values, origins[i : i + _EVAL_CHUNK], cfg.T, cfg.H)
        err = _predict_horizon(model, X, cfg.H, cfg.mode) - Y
        with np.errstate(over="ignore"):  # huge-but-finite divergence -> inf metric
            sq_sum += float(np.sum(err * err))
        abs_sum += float(np.sum(np.abs(err)))
        count += err.size
    return EvalRecord(
        model=model_id,
        dataset=dataset_id,
        T=cfg.T,
        L=cfg.L,
        H=cfg.H,
        mode=cfg.mode,
        mse=sq_sum / count,
        mae=abs_sum / count,
        n_windows=int(origins.size),
    )


@dataclass
class TrainRunInfo:
    """One training session inside a sweep: the (T, L) pair it served."""

    model_id: str
    T: int
    L: int
    history: TrainHistory


@dataclass
class SweepResult:
    records: list[EvalRecord]
    train_runs: list[TrainRunInfo]
    models: dict[tuple[int, int], Forecaster] = field(default_factory=dict)


def sweep(
    frame: SeriesFrame,
    split_spec: SplitSpec,
    base_spec: ForecasterSpec,
    train_cfg: TrainConfig,
    T_values: Sequence[int],
    L_values: Sequence[int],
    H_values: Sequence[int],
    modes: Sequence[str] = (MODE_RECURSIVE,),
    dataset_id: str = "dataset",
    stride: int = 1,
) -> SweepResult:
    """Train one model per (T, L) and score every legal (H, mode) cell.

    A single training session serves all horizons of its (T, L); failed
    cells are recorded with a status instead of aborting the sweep. Records
    come back sorted by (T, L, H, mode).
    """
    T_values = sorted(set(T_values))
    L_values = sorted(set(L_values))
    H_values = sorted(set(H_values))
    splits = chronological_split(frame, split_spec, max_lookback=max(T_values))
    stats = fit_standardize(splits.train)
    train_z = apply_standardize(splits.train, stats)
    val_z = apply_standardize(splits.val, stats)
    test_z = apply_standardize(splits.test, stats)
    model_id = base_spec.kind

    records: list[EvalRecord] = []
    runs: list[TrainRunInfo] = []
    models: dict[tuple[int, int], Forecaster] = {}

    def failed(T, L, H, mode, status, n_windows=0):
        return EvalRecord(model_id, dataset_id, T, L, H, mode, math.nan, math.nan,
                          n_windows, status)

    for T in T_values:
        for L in L_values:
            spec = replace(base_spec, T=T, L=L)
            try:
                model = build(spec)
                model, history = train(model, train_z, val_z, train_cfg, splits.val_context)
            except (NoTrainWindows, NoValWindows):
                for H in H_values:
                    for mode in modes:
                        records.append(failed(T, L, H, mode, STATUS_HORIZON_EXCEEDS_DATA))
                continue
            runs.append(TrainRunInfo(model_id, T, L, history))
            models[(T, L)] = model
            for H in H_values:
                for mode in modes:
                    if mode == MODE_DIRECT and L < H:
                        records.append(failed(T, L, H, mode, STATUS_MODE_MISMATCH))
                        continue
                    cfg = EvalConfig(mode, T, L, H, stride)
                    try:
                        records.append(
                            evaluate(model, test_z, cfg, splits.test_context,
                                     model_id, dataset_id)
                        )
                    except (NoTestWindows, HorizonExceedsData):
                        records.append(failed(T, L, H, mode, STATUS_HORIZON_EXCEEDS_DATA))
                    except NonFiniteBlock:
                        records.append(failed(T, L, H, mode, STATUS_NON_FINITE_BLOCK))
    records.sort(key=lambda r: (r.T, r.L, r.H, r.mode))
    return SweepResult(records, runs, models)


@dataclass(frozen=True)
class WinComparison:
    """Declarative record selectors for a pairwise paradigm comparison.

    ``left`` / ``right`` map EvalRecord field names to a required value (or
    list of admissible values); the special key ``L_equals_H`` selects the
    coupled configuration. When a selector matches several records in one
    (model, dataset, H) cell, the best (minimum) metric represents that side.
    """

    name: str
    left: Mapping
    right: Mapping
    tie_rule: str = "left_wins_ties"


@dataclass(frozen=True)
class WinSummary:
    name: str
    wins: int
    ties: int
    losses: int
    tie_rule: str = "left_wins_ties"

    @property
    def total(self) -> int:
        return self.wins + self.ties + self.losses

    @property
    def win_ratio(self) -> float:
        favored = self.wins + self.ties if self.tie_rule == "left_wins_ties" else self.wins
        return favored / self.total


def _select(records: Sequence[EvalRecord], filters: Mapping) -> list[EvalRecord]:
    out = []
    for rec in records:
        if rec.status != STATUS_OK:
            continue
        keep = True
        for key, want in filters.items():
            if key == "L_equals_H":
                if bool(want) != (rec.L == rec.H):
                    keep = False
                    break
                continue
            have = getattr(rec, key)
            admissible = want if isinstance(want, (list, tuple, set)) else (want,)
            if have not in admissible:
                keep = False
                break
        if keep:
            out.append(rec)
    return out


def win_ratio(records: Sequence[EvalRecord], comparison: WinComparison) -> WinSummary:
    """Count left wins/ties/losses over matched (model, dataset, H, metric) cells."""
    sides = {}
    for side, filters in (("left", comparison.left), ("right", comparison.right)):
        cells: dict[tuple, dict[str, float]] = {}
        for rec in _select(records, filters):
            key = (rec.model, rec.dataset, rec.H)
            best = cells.setdefault(key, {"mse": math.inf, "mae": math.inf})
            best["mse"] = min(best["mse"], rec.mse)
            best["mae"] = min(best["mae"], rec.mae)
        sides[side] = cells
    all_keys = sorted(set(sides["left"]) | set(sides["right"]))
    if not all_keys:
        raise UnmatchedCell("no cells matched either selector")
    wins = ties = losses = 0
    for key in all_keys:
        if key not in sides["left"] or key not in sides["right"]:
            raise UnmatchedCell(f"cell {key} present on one side only")
        for metric in ("mse", "mae"):
            l, r = sides["left"][key][metric], sides["right"][key][metric]
            if l < r:
                wins += 1
            elif l == r:
                ties += 1
            else:
                losses += 1
    return WinSummary(comparison.name, wins, ties, losses, comparison.tie_rule)


def extreme_horizon_eval(
    model: Forecaster,
    test_frame: SeriesFrame,
    T: int,
    H_values: Sequence[int],
    context_rows: int = 0,
    model_id: str = "",
    dataset_id: str = "",
) -> list[EvalRecord]:
    """Recursive-mode degradation curve over increasing horizons.

    At the largest legal H the frame hosts a single window. Horizons with no
    window, or whose rollout diverges, are recorded by status so the rest of
    the curve still completes.
    """
    if T != model.spec.T:
        raise ShapeMismatch(f"T={T} does not match the model's input length {model.spec.T}")
    records = []
    for H in sorted(set(H_values)):
        cfg = EvalConfig(MODE_RECURSIVE, T, model.spec.L, H, stride=1)
        try:
            records.append(
                evaluate(model, test_frame, cfg, context_rows, model_id, dataset_id)
            )
        except NoTestWindows:
            records.append(
                EvalRecord(model_id, dataset_id, T, model.spec.L, H, MODE_RECURSIVE,
                           math.nan, math.nan, 0, STATUS_HORIZON_EXCEEDS_DATA)
            )
        except NonFiniteBlock:
            records.append(
                EvalRecord(model_id, dataset_id, T, model.spec.L, H, MODE_RECURSIVE,
                           math.nan, math.nan, 0, STATUS_NON_FINITE_BLOCK)
            )
    return records


REPORT_COLUMNS = ("model", "dataset", "T", "L", "H", "mode", "mse", "mae",
                  "n_windows", "status")


def write_report_csv(records: Sequence[EvalRecord], path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in records:
            fh.write(
                f"{r.model},{r.dataset},{r.T},{r.L},{r.H},{r.mode},"
                f"{r.mse:.9g},{r.mae:.9g},{r.n_windows},{r.status}\n"
            )
    os.replace(tmp, path)


def read_report_csv(path) -> list[EvalRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                EvalRecord(
                    model=row["model"],
                    dataset=row["dataset"],
                    T=int(row["T"]),
                    L=int(row["L"]),
                    H=int(row["H"]),
                    mode=row["mode"],
                    mse=float(row["mse"]),
                    mae=float(row["mae"]),
                    n_windows=int(row["n_windows"]),
                    status=row["status"],
                )
            )
    return records
