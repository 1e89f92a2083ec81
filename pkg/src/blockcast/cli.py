"""Command-line front end: train, predict, sweep, grad, report.

Runs are driven by a single JSON config; one top-level seed is split
deterministically into the model-init and shuffle seeds, so a config plus a
seed fully reproduces every output. All file writes are atomic
(write-temp-then-rename) and every command leaves a run-metadata sidecar
(config hash, package version, wall time) next to its outputs -- the wall
time there is the only nondeterministic output of a run.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    ColumnSchema,
    SeriesFrame,
    SplitSpec,
    StandardizeStats,
    apply_standardize,
    chronological_split,
    fit_standardize,
    invert_standardize,
    load_csv,
)
from .errors import BlockcastError, ConfigError, ShortInput
from .evaluation import (
    MODES,
    WinComparison,
    read_report_csv,
    sweep,
    win_ratio,
    write_report_csv,
)
from .gradients import (
    SegmentPartition,
    analyze_training,
    default_partition,
    write_dynamics_csv,
    write_global_sim_csv,
)
from .models import ForecasterSpec, build, load_checkpoint, save_checkpoint
from .rollout import RolloutConfig, rollout, save_trace
from .training import TrainConfig, train, write_history_csv


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str
    dataset_id: str
    timestamp_column: str | None
    channels: tuple[str, ...] | None
    split: SplitSpec
    model: ForecasterSpec
    train: TrainConfig
    eval_modes: tuple[str, ...]
    eval_T: tuple[int, ...]
    eval_L: tuple[int, ...]
    eval_H: tuple[int, ...]
    eval_stride: int
    grad_enabled: bool
    grad_partition: tuple[int, ...] | None
    output_dir: str
    seed: int


def _split_seed(seed: int) -> tuple[int, int]:
    """Derive (init, shuffle) sub-seeds from the single run seed."""
    init, shuffle = np.random.SeedSequence(seed).generate_state(2)
    return int(init), int(shuffle)


def _as_tuple(value, cast):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


def load_config(path, seed_override: int | None = None,
                output_override: str | None = None,
                stride_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None

    try:
        ds = raw["dataset"]
        dataset_path = ds["path"]
        if not os.path.exists(dataset_path):
            raise ConfigError(f"dataset path does not exist: {dataset_path}")
        dataset_id = ds.get("id") or Path(dataset_path).stem
        channels = _as_tuple(ds.get("channels"), str)

        sp = raw.get("split", {})
        ratios = sp.get("ratios", [6, 2, 2])
        if len(ratios) != 3:
            raise ConfigError("split.ratios must have three entries")
        split = SplitSpec(ratios[0], ratios[1], ratios[2],
                          bool(sp.get("lookback_overlap", True)))

        seed = int(seed_override if seed_override is not None else raw.get("seed", 0))
        init_seed, shuffle_seed = _split_seed(seed)

        m = raw["model"]
        model = ForecasterSpec(
            kind=m["kind"],
            T=int(m["T"]),
            L=int(m["L"]),
            C=int(m.get("C", 0)),  # 0 = fill from the dataset at load time
            period=int(m.get("period", 1)),
            per_channel=bool(m.get("per_channel", False)),
            kernel_width=int(m.get("kernel_width", 25)),
            hidden_width=int(m.get("hidden_width", 128)),
            seed=init_seed,
        )

        tr = raw.get("train", {})
        train_cfg = TrainConfig(
            max_epochs=int(tr.get("max_epochs", 100)),
            patience=int(tr.get("patience", 10)),
            learning_rate=float(tr.get("learning_rate", 1e-3)),
            batch_size=int(tr.get("batch_size", 32)),
            adam_beta1=float(tr.get("adam_beta1", 0.9)),
            adam_beta2=float(tr.get("adam_beta2", 0.999)),
            adam_eps=float(tr.get("adam_eps", 1e-8)),
            shuffle_seed=shuffle_seed,
        )

        ev = raw.get("eval", {})
        modes = _as_tuple(ev.get("modes", ev.get("mode", "recursive")), str)
        for mode in modes:
            if mode not in MODES:
                raise ConfigError(f"eval mode {mode!r} not in {MODES}")
        eval_T = _as_tuple(ev.get("T", model.T), int)
        eval_L = _as_tuple(ev.get("L", model.L), int)
        eval_H = _as_tuple(ev.get("H", model.L), int)
        if not eval_H:
            raise ConfigError("eval.H must be non-empty")
        stride = int(stride_override if stride_override is not None
                     else ev.get("stride", 1))

        gr = raw.get("grad", {})
        grad_partition = _as_tuple(gr.get("partition"), int)

        output_dir = output_override or raw.get("output_dir", "out")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config field: {exc!r}") from None

    return RunConfig(
        dataset_path=dataset_path,
        dataset_id=dataset_id,
        timestamp_column=ds.get("timestamp_column"),
        channels=channels,
        split=split,
        model=model,
        train=train_cfg,
        eval_modes=modes,
        eval_T=eval_T,
        eval_L=eval_L,
        eval_H=eval_H,
        eval_stride=stride,
        grad_enabled=bool(gr.get("enabled", False)),
        grad_partition=grad_partition,
        output_dir=output_dir,
        seed=seed,
    )


def _load_frame(cfg: RunConfig) -> SeriesFrame:
    schema = ColumnSchema(timestamp_column=cfg.timestamp_column, channels=cfg.channels)
    return load_csv(cfg.dataset_path, schema)


def _with_channels(spec: ForecasterSpec, frame: SeriesFrame) -> ForecasterSpec:
    if spec.C == 0:
        return replace(spec, C=frame.n_channels)
    if spec.C != frame.n_channels:
        raise ConfigError(
            f"model.C={spec.C} but dataset has {frame.n_channels} channels"
        )
    return spec


def _atomic_write_json(doc, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_sidecar(out_dir: Path, effective_config: dict, started: float) -> None:
    payload = json.dumps(effective_config, sort_keys=True, default=str).encode()
    _atomic_write_json(
        {
            "config_sha256": hashlib.sha256(payload).hexdigest(),
            "version": __version__,
            "wall_seconds": time.perf_counter() - started,
            "created_utc": datetime.now(timezone.utc).isoformat(),
        },
        out_dir / "run_meta.json",
    )


def _save_scaler(stats: StandardizeStats, channel_names, path) -> None:
    _atomic_write_json(
        {
            "channel_names": list(channel_names),
            "mean": stats.mean.tolist(),
            "std": stats.std.tolist(),
        },
        path,
    )


def _load_scaler(path) -> tuple[StandardizeStats, tuple[str, ...]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return (
        StandardizeStats(np.asarray(doc["mean"]), np.asarray(doc["std"])),
        tuple(doc["channel_names"]),
    )


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, args.seed, args.output)
    frame = _load_frame(cfg)
    spec = _with_channels(cfg.model, frame)
    splits = chronological_split(frame, cfg.split, max_lookback=spec.T)
    stats = fit_standardize(splits.train)
    model = build(spec)
    model, history = train(
        model,
        apply_standardize(splits.train, stats),
        apply_standardize(splits.val, stats),
        cfg.train,
        splits.val_context,
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.json")
    write_history_csv(history, out / "history.csv")
    _save_scaler(stats, frame.channel_names, out / "scaler.json")
    _write_sidecar(out, {"command": "train", "config": str(args.config), "seed": cfg.seed}, started)
    return 0


def cmd_predict(args) -> int:
    started = time.perf_counter()
    for path, what in ((args.checkpoint, "checkpoint"), (args.input, "input CSV")):
        if not os.path.exists(path):
            raise ConfigError(f"{what} not found: {path}")
    model = load_checkpoint(args.checkpoint)
    spec = model.spec

    scaler_path = args.scaler or Path(args.checkpoint).parent / "scaler.json"
    stats = channel_names = None
    if os.path.exists(scaler_path):
        stats, channel_names = _load_scaler(scaler_path)

    schema = ColumnSchema(
        timestamp_column=args.timestamp_column, channels=channel_names
    )
    frame = load_csv(args.input, schema)
    if frame.n_channels != spec.C:
        raise ConfigError(
            f"input has {frame.n_channels} channels, model expects {spec.C}"
        )
    if frame.n_steps < spec.T:
        raise ShortInput(f"input has {frame.n_steps} rows, model needs T={spec.T}")

    tail = frame.slice_rows(frame.n_steps - spec.T, frame.n_steps)
    if stats is not None:
        tail = apply_standardize(tail, stats)
    H = args.horizon or spec.L
    if H < 1:
        raise ConfigError(f"horizon must be >= 1, got {H}")
    trace = rollout(model, tail.values, H, trace=args.trace)

    pred = SeriesFrame(trace.y_hat, frame.channel_names)
    if stats is not None:
        pred = invert_standardize(pred, stats)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "prediction.csv.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(pred.channel_names) + "\n")
        for row in pred.values:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    os.replace(tmp, out / "prediction.csv")
    if args.trace:
        save_trace(trace, RolloutConfig(spec.T, spec.L, H), out / "trace.json")
    _write_sidecar(
        out,
        {"command": "predict", "checkpoint": str(args.checkpoint),
         "input": str(args.input), "H": H},
        started,
    )
    return 0


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, args.seed, args.output, args.stride)
    frame = _load_frame(cfg)
    spec = _with_channels(cfg.model, frame)
    result = sweep(
        frame,
        cfg.split,
        spec,
        cfg.train,
        cfg.eval_T,
        cfg.eval_L,
        cfg.eval_H,
        cfg.eval_modes,
        dataset_id=cfg.dataset_id,
        stride=cfg.eval_stride,
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(result.records, out / "report.csv")
    _write_sidecar(
        out,
        {"command": "sweep", "config": str(args.config), "seed": cfg.seed,
         "train_runs": len(result.train_runs)},
        started,
    )
    return 0


def cmd_grad(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config, args.seed, args.output)
    frame = _load_frame(cfg)
    spec = _with_channels(cfg.model, frame)
    if spec.T != spec.L:
        raise ConfigError(
            f"gradient analysis needs the square setting: model.T "
            f"({spec.T}) must equal model.L ({spec.L})"
        )
    splits = chronological_split(frame, cfg.split, max_lookback=spec.T)
    stats = fit_standardize(splits.train)
    partition = (
        SegmentPartition.from_boundaries(cfg.grad_partition)
        if cfg.grad_partition
        else default_partition(spec.L)
    )
    grad_stats = analyze_training(
        spec,
        apply_standardize(splits.train, stats),
        apply_standardize(splits.val, stats),
        cfg.train,
        partition,
        splits.val_context,
    )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_global_sim_csv(grad_stats, out / "grad_global_sim.csv")
    write_dynamics_csv(grad_stats, out / "grad_dynamics.csv")
    _write_sidecar(out, {"command": "grad", "config": str(args.config), "seed": cfg.seed}, started)
    return 0


def cmd_report(args) -> int:
    started = time.perf_counter()
    records = []
    for path in args.reports:
        if not os.path.exists(path):
            raise ConfigError(f"report CSV not found: {path}")
        records.extend(read_report_csv(path))
    try:
        with open(args.comparisons, encoding="utf-8") as fh:
            comp_doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"comparison spec not found: {args.comparisons}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"comparison spec is not valid JSON: {exc}") from None
    if isinstance(comp_doc, dict):
        comp_doc = [comp_doc]

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "win_summary.csv.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("comparison_name,wins,ties,losses,win_ratio\n")
        for entry in comp_doc:
            comparison = WinComparison(
                name=entry["name"],
                left=entry["left"],
                right=entry["right"],
                tie_rule=entry.get("tie_rule", "left_wins_ties"),
            )
            summary = win_ratio(records, comparison)
            fh.write(
                f"{summary.name},{summary.wins},{summary.ties},{summary.losses},"
                f"{summary.win_ratio:.9g}\n"
            )
    os.replace(tmp, out / "win_summary.csv")
    _write_sidecar(
        out,
        {"command": "report", "reports": [str(p) for p in args.reports],
         "comparisons": str(args.comparisons)},
        started,
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockcast",
        description="Long-horizon forecasting via block-wise recursive rollout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--output", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")

    p_train = sub.add_parser("train", help="fit a model, write checkpoint + history")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="roll a checkpoint out to any horizon")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", required=True, help="CSV with at least T rows")
    p_pred.add_argument("--horizon", type=int, default=None)
    p_pred.add_argument("--timestamp-column", default=None)
    p_pred.add_argument("--scaler", default=None, help="scaler.json from training")
    p_pred.add_argument("--trace", action="store_true", help="also dump trace.json")
    p_pred.add_argument("--output", default="out")
    p_pred.set_defaults(func=cmd_predict)

    p_sweep = sub.add_parser("sweep", help="train/evaluate over a (T, L, H) grid")
    add_common(p_sweep)
    p_sweep.add_argument("--stride", type=int, default=None, help="evaluation stride")
    p_sweep.set_defaults(func=cmd_sweep)

    p_grad = sub.add_parser("grad", help="per-segment gradient analysis of training")
    add_common(p_grad)
    p_grad.set_defaults(func=cmd_grad)

    p_rep = sub.add_parser("report", help="win-ratio summary from report CSVs")
    p_rep.add_argument("--reports", nargs="+", required=True)
    p_rep.add_argument("--comparisons", required=True, help="JSON comparison spec")
    p_rep.add_argument("--output", default="out")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BlockcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
