"""Multi-scale gradient diagnostics for full-horizon training.

During an ordinary training run, the output horizon is partitioned into time
segments and, on every minibatch, the gradient of each segment's own MSE is
recorded next to the full-horizon gradient that actually drives the update.
Pairwise cosine similarities expose directional conflict between near and far
segments; norm ratios expose which segments dominate the update magnitude.

The analyzer is a pure observer: parameter updates use the full-horizon
gradient, so a run with identical seeds follows the identical trajectory as
plain training.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .data import SeriesFrame
from .errors import InvalidSpec, ZeroNormGradient, ZeroTotalGradient
from .models import ForecasterSpec, ParamVector, SegmentSpec, build
from .training import TrainConfig, TrainHistory, _fit


@dataclass(frozen=True)
class SegmentPartition:
    """Ordered, disjoint segments covering [0, L), plus the full horizon."""

    segments: tuple[SegmentSpec, ...]
    L: int
    include_all: bool = True

    def __post_init__(self):
        if not self.segments:
            raise ValueError("partition needs at least one segment")
        prev_end = 0
        for seg in self.segments:
            if seg.start != prev_end or seg.end <= seg.start:
                raise ValueError("segments must be sorted, disjoint and contiguous")
            prev_end = seg.end
        if prev_end != self.L:
            raise ValueError(f"segments must cover [0, {self.L}) exactly")

    @classmethod
    def from_boundaries(cls, bounds, include_all: bool = True) -> "SegmentPartition":
        bounds = list(bounds)
        segs = tuple(SegmentSpec(a, b) for a, b in zip(bounds[:-1], bounds[1:]))
        return cls(segs, bounds[-1], include_all)

    @property
    def labels(self) -> tuple[str, ...]:
        """Stable names: one per segment, plus 'all' when included."""
        names = tuple(f"{s.start}..{s.end}" for s in self.segments)
        return names + ("all",) if self.include_all else names


def default_partition(L: int) -> SegmentPartition:
    """Four contiguous segments plus the full horizon.

    L=720 uses the benchmark boundaries 96/192/336; other horizons split
    into near-equal quarters (degenerating gracefully for tiny L).
    """
    if L == 720:
        return SegmentPartition.from_boundaries([0, 96, 192, 336, 720])
    bounds = sorted({(i * L) // 4 for i in range(5)})
    return SegmentPartition.from_boundaries(bounds)


def _as_array(g) -> np.ndarray:
    return g.values if isinstance(g, ParamVector) else np.asarray(g, dtype=np.float64)


def cosine_sim(g1, g2) -> float:
    """cos(g1, g2), clamped to [-1, 1]; undefined for a zero-norm gradient."""
    a, b = _as_array(g1), _as_array(g2)
    if a.shape != b.shape:
        raise ValueError("gradient vectors must share one length")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormGradient("cosine similarity undefined at zero gradient")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def norm_ratio(g_s, g_all) -> float:
    """||g_s|| / ||g_all||; undefined when the full gradient vanishes."""
    s, full = _as_array(g_s), _as_array(g_all)
    n_all = float(np.linalg.norm(full))
    if n_all == 0.0:
        raise ZeroTotalGradient("norm ratio undefined: total gradient is zero")
    return float(np.linalg.norm(s)) / n_all


@dataclass
class GradSnapshot:
    """Per-(epoch, batch) record. NaN marks entries that were undefined
    because a segment gradient had zero norm; they are excluded from means."""

    epoch: int
    batch: int
    sim: np.ndarray
    norm_ratio: np.ndarray
    gradients: list[np.ndarray] | None = None


@dataclass
class GradStats:
    """Aggregates over a full analysis run.

    Matrix/label order follows the partition: segments first, 'all' last.
    """

    labels: tuple[str, ...]
    segment_widths: tuple[int, ...]
    global_sim: np.ndarray
    sim_included: np.ndarray
    sim_excluded: np.ndarray
    epochs: list[int]
    epoch_sim_mean: np.ndarray    # (n_epochs, n_segments): Sim(s, all)
    epoch_sim_std: np.ndarray
    epoch_sim_n: np.ndarray
    epoch_ratio_mean: np.ndarray  # (n_epochs, n_segments)
    epoch_ratio_std: np.ndarray
    epoch_ratio_n: np.ndarray
    ratio_global_mean: np.ndarray
    ratio_global_std: np.ndarray
    n_excluded_total: int
    snapshots: list[GradSnapshot] = field(repr=False, default_factory=list)
    history: TrainHistory | None = None


def _nan_population_stats(values: np.ndarray) -> tuple[float, float, int]:
    included = values[~np.isnan(values)]
    if included.size == 0:
        return math.nan, math.nan, 0
    mean = float(included.mean())
    std = float(np.sqrt(np.mean((included - mean) ** 2)))
    return mean, std, int(included.size)


def aggregate_snapshots(
    snapshots: list[GradSnapshot],
    partition: SegmentPartition,
    history: TrainHistory | None = None,
) -> GradStats:
    labels = partition.labels
    n_all = len(labels)
    n_seg = len(partition.segments)
    sims = np.stack([s.sim for s in snapshots])          # (B_total, n_all, n_all)
    ratios = np.stack([s.norm_ratio for s in snapshots])  # (B_total, n_seg)
    epochs_of = np.array([s.epoch for s in snapshots])

    global_sim = np.full((n_all, n_all), math.nan)
    included = np.zeros((n_all, n_all), dtype=np.int64)
    excluded = np.zeros((n_all, n_all), dtype=np.int64)
    for i in range(n_all):
        for j in range(n_all):
            mean, _, n = _nan_population_stats(sims[:, i, j])
            global_sim[i, j] = mean
            included[i, j] = n
            excluded[i, j] = sims.shape[0] - n

    epochs = sorted(set(int(e) for e in epochs_of))
    e_sim_mean = np.full((len(epochs), n_seg), math.nan)
    e_sim_std = np.full((len(epochs), n_seg), math.nan)
    e_sim_n = np.zeros((len(epochs), n_seg), dtype=np.int64)
    e_ratio_mean = np.full((len(epochs), n_seg), math.nan)
    e_ratio_std = np.full((len(epochs), n_seg), math.nan)
    e_ratio_n = np.zeros((len(epochs), n_seg), dtype=np.int64)
    all_idx = n_all - 1
    for ei, epoch in enumerate(epochs):
        mask = epochs_of == epoch
        for si in range(n_seg):
            m, sd, n = _nan_population_stats(sims[mask, si, all_idx])
            e_sim_mean[ei, si], e_sim_std[ei, si], e_sim_n[ei, si] = m, sd, n
            m, sd, n = _nan_population_stats(ratios[mask, si])
            e_ratio_mean[ei, si], e_ratio_std[ei, si], e_ratio_n[ei, si] = m, sd, n

    ratio_mean = np.empty(n_seg)
    ratio_std = np.empty(n_seg)
    for si in range(n_seg):
        ratio_mean[si], ratio_std[si], _ = _nan_population_stats(ratios[:, si])

    n_excluded_total = int(np.isnan(sims).sum() + np.isnan(ratios).sum())
    return GradStats(
        labels=labels,
        segment_widths=tuple(s.width for s in partition.segments),
        global_sim=global_sim,
        sim_included=included,
        sim_excluded=excluded,
        epochs=epochs,
        epoch_sim_mean=e_sim_mean,
        epoch_sim_std=e_sim_std,
        epoch_sim_n=e_sim_n,
        epoch_ratio_mean=e_ratio_mean,
        epoch_ratio_std=e_ratio_std,
        epoch_ratio_n=e_ratio_n,
        ratio_global_mean=ratio_mean,
        ratio_global_std=ratio_std,
        n_excluded_total=n_excluded_total,
        snapshots=snapshots,
        history=history,
    )


def analyze_training(
    spec: ForecasterSpec,
    train_frame: SeriesFrame,
    val_frame: SeriesFrame,
    cfg: TrainConfig,
    partition: SegmentPartition | None = None,
    val_context_rows: int = 0,
    keep_gradients: bool = False,
) -> GradStats:
    """Train normally while recording per-segment gradient geometry.

    Gradient conflict is studied in the square configuration, so the spec
    must have T == L and a nonzero parameter count. On every minibatch,
    each segment's gradient (and the full-horizon gradient) is computed
    before the update; the update itself applies the full-horizon gradient.
    """
    if spec.T != spec.L:
        raise InvalidSpec("gradient analysis runs the square setting: T must equal L")
    model = build(spec)
    if model.num_params == 0:
        raise InvalidSpec("gradient analysis needs a parameterized model")
    part = partition or default_partition(spec.L)
    if part.L != spec.L:
        raise InvalidSpec(f"partition covers [0, {part.L}) but the model has L={spec.L}")
    if not part.include_all:
        raise InvalidSpec("analysis requires the full-horizon pseudo-segment")

    segs = list(part.segments)
    snapshots: list[GradSnapshot] = []

    def hook(epoch: int, batch: int, X, Y, grad_all: np.ndarray) -> None:
        grads = [
            model.loss_and_grad((X, Y), seg)[1].values for seg in segs
        ] + [grad_all]
        n = len(grads)
        sim = np.full((n, n), math.nan)
        for i in range(n):
            for j in range(i, n):
                try:
                    sim[i, j] = sim[j, i] = cosine_sim(grads[i], grads[j])
                except ZeroNormGradient:
                    pass
        ratios = np.full(len(segs), math.nan)
        for i in range(len(segs)):
            try:
                ratios[i] = norm_ratio(grads[i], grad_all)
            except ZeroTotalGradient:
                pass
        snapshots.append(
            GradSnapshot(
                epoch=epoch,
                batch=batch,
                sim=sim,
                norm_ratio=ratios,
                gradients=[g.copy() for g in grads] if keep_gradients else None,
            )
        )

    history = _fit(model, train_frame, val_frame, cfg, val_context_rows, batch_hook=hook)
    return aggregate_snapshots(snapshots, part, history)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_global_sim_csv(stats: GradStats, path) -> None:
    """Full symmetric mean-similarity matrix, one row per (i, j) pair."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("row_segment,col_segment,mean_cosine,n_included,n_excluded\n")
        for i, row_label in enumerate(stats.labels):
            for j, col_label in enumerate(stats.labels):
                fh.write(
                    f"{row_label},{col_label},{_fmt(stats.global_sim[i, j])},"
                    f"{stats.sim_included[i, j]},{stats.sim_excluded[i, j]}\n"
                )
    os.replace(tmp, path)


def write_dynamics_csv(stats: GradStats, path) -> None:
    """Per-epoch mean/std series of Sim(s, all) and the norm ratio."""
    n_seg = len(stats.labels) - 1
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,segment,metric,mean,std,n_batches\n")
        for ei, epoch in enumerate(stats.epochs):
            for si in range(n_seg):
                label = stats.labels[si]
                fh.write(
                    f"{epoch},{label},sim_vs_all,{_fmt(stats.epoch_sim_mean[ei, si])},"
                    f"{_fmt(stats.epoch_sim_std[ei, si])},{stats.epoch_sim_n[ei, si]}\n"
                )
                fh.write(
                    f"{epoch},{label},norm_ratio,{_fmt(stats.epoch_ratio_mean[ei, si])},"
                    f"{_fmt(stats.epoch_ratio_std[ei, si])},{stats.epoch_ratio_n[ei, si]}\n"
                )
    os.replace(tmp, path)
