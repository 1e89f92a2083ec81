"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Criteria 8-10 train on the bundled ETTh1 benchmark file and together
take a few minutes; everything else completes in seconds.
"""

import contextlib
import math
import time

import numpy as np
import pytest

from blockcast import (
    EvalConfig,
    ForecasterSpec,
    Phase,
    SegmentPartition,
    SegmentSpec,
    SplitSpec,
    TrainConfig,
    WinComparison,
    analyze_training,
    apply_standardize,
    build,
    chronological_split,
    evaluate,
    extreme_horizon_eval,
    fit_standardize,
    iter_windows,
    phase_of,
    rollout,
    sweep,
    train,
    win_ratio,
)
from blockcast.evaluation import EvalRecord

from conftest import random_walk_frame
from test_models import fd_gradient, random_small_spec
from test_rollout import brute_force_rollout, random_model

# Desk-scale training protocol for the ETTh1 reproduction (criteria 8-10).
# The learning rate is pinned below the package default: with a flat rate
# (no schedules) the benchmark landscape needs the smaller step to converge
# smoothly, and this setting lands inside the published tolerance.
DESK_TRAIN = dict(learning_rate=3e-5, batch_size=32, max_epochs=100, patience=10)


@contextlib.contextmanager
def criterion(num, label):
    try:
        yield
    except BaseException:
        print(f"\n[FAIL] criterion {num:2d}: {label}")
        raise
    print(f"\n[PASS] criterion {num:2d}: {label}")


@pytest.fixture(scope="session")
def etth1_desk(etth1_frame):
    """Standardized splits plus the two trained desk-scale models (L=96, 192)."""
    split = chronological_split(etth1_frame, SplitSpec(6, 2, 2), max_lookback=720)
    stats = fit_standardize(split.train)
    frames = {
        "train": apply_standardize(split.train, stats),
        "val": apply_standardize(split.val, stats),
        "test": apply_standardize(split.test, stats),
    }
    models = {}
    started = time.perf_counter()
    for L in (96, 192):
        model = build(ForecasterSpec("decomp_linear", T=720, L=L, C=7, seed=0))
        model, _ = train(
            model, frames["train"], frames["val"],
            TrainConfig(shuffle_seed=100, **DESK_TRAIN), split.val_context,
        )
        models[L] = model
    return {
        "split": split,
        "frames": frames,
        "models": models,
        "train_seconds": time.perf_counter() - started,
    }


def test_criterion_1_single_block_rollout_is_predict():
    with criterion(1, "rollout at H = L is bitwise-equal to one forward pass"):
        rng = np.random.default_rng(10)
        started = time.perf_counter()
        for _ in range(500):
            model = random_model(rng)
            x = rng.normal(size=(model.spec.T, model.spec.C))
            trace = rollout(model, x, model.spec.L)
            assert np.array_equal(trace.y_hat, model.predict(x))
        assert time.perf_counter() - started < 5.0


def test_criterion_2_rollout_matches_virtual_sequence_oracle():
    with criterion(2, "rollout equals the virtual-sequence brute-force oracle"):
        rng = np.random.default_rng(11)
        started = time.perf_counter()
        for _ in range(200):
            model = random_model(rng)
            x = rng.normal(size=(model.spec.T, model.spec.C))
            H = int(rng.integers(1, 41))
            assert np.array_equal(rollout(model, x, H).y_hat,
                                  brute_force_rollout(model, x, H))
        assert time.perf_counter() - started < 5.0


def test_criterion_3_phase_boundaries():
    with criterion(3, "phase boundaries for T=720/L=96 and the square setting"):
        assert phase_of(1, 720, 96) is Phase.DIRECT
        for k in range(2, 9):
            assert phase_of(k, 720, 96) is Phase.SEMI_EXTRAPOLATION
        for k in range(9, 20):
            assert phase_of(k, 720, 96) is Phase.PURE_EXTRAPOLATION
        assert phase_of(2, 720, 720) is Phase.PURE_EXTRAPOLATION
        assert phase_of(2, 96, 96) is Phase.PURE_EXTRAPOLATION


def test_criterion_4_gradients_match_finite_differences():
    with criterion(4, "segment gradients match central differences (1e-5 rel)"):
        rng = np.random.default_rng(12)
        started = time.perf_counter()
        for _ in range(100):
            spec = random_small_spec(rng)
            model = build(spec)
            X = rng.normal(size=(2, spec.T, spec.C))
            Y = rng.normal(size=(2, spec.L, spec.C))
            s = int(rng.integers(0, spec.L))
            seg = SegmentSpec(s, int(rng.integers(s + 1, spec.L + 1)))
            _, grad = model.loss_and_grad((X, Y), seg)
            fd = fd_gradient(model, X, Y, seg)
            scale = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(grad.values)))
            assert (np.abs(fd - grad.values) / scale).max() < 1e-5
        assert time.perf_counter() - started < 30.0


@pytest.fixture(scope="module")
def toy_grad_stats():
    rng = np.random.default_rng(13)
    frame = random_walk_frame(rng, 100)
    spec = ForecasterSpec("linear_direct", T=8, L=8, C=1, seed=2)
    cfg = TrainConfig(max_epochs=5, patience=5, batch_size=8, shuffle_seed=3)
    return analyze_training(
        spec, frame.slice_rows(0, 70), frame.slice_rows(70, 100), cfg,
        keep_gradients=True,
    )


def test_criterion_5_gradient_decomposition(toy_grad_stats):
    with criterion(5, "weighted segment gradients recompose the full gradient"):
        started = time.perf_counter()
        stats = toy_grad_stats
        widths = np.array(stats.segment_widths, dtype=float)
        L = widths.sum()
        assert len(stats.snapshots) >= 5
        for snap in stats.snapshots:
            weighted = sum(
                w / L * g for w, g in zip(widths, snap.gradients[:-1])
            )
            np.testing.assert_allclose(weighted, snap.gradients[-1], atol=1e-10)
        assert time.perf_counter() - started < 10.0


def test_criterion_6_similarity_matrix_laws(toy_grad_stats):
    with criterion(6, "similarity matrices: symmetric, unit diagonal, in [-1, 1]"):
        for snap in toy_grad_stats.snapshots:
            sim = snap.sim
            np.testing.assert_array_equal(sim, sim.T)
            defined = ~np.isnan(sim)
            assert np.all(np.abs(sim[defined]) <= 1.0 + 1e-12)
            diag = np.diag(sim)
            np.testing.assert_allclose(diag[~np.isnan(diag)], 1.0, atol=1e-12)

        rng = np.random.default_rng(14)
        frame = random_walk_frame(rng, 80)
        stats = analyze_training(
            ForecasterSpec("linear_direct", T=4, L=4, C=1, seed=5),
            frame.slice_rows(0, 60),
            frame.slice_rows(60, 80),
            TrainConfig(max_epochs=2, patience=2, batch_size=8, shuffle_seed=6),
            SegmentPartition((SegmentSpec(0, 4),), 4),
        )
        assert (stats.sim_included > 0).all()
        np.testing.assert_allclose(stats.global_sim, 1.0, atol=1e-12)


def test_criterion_7_window_count_formula():
    with criterion(7, "sliding-window sample count formula"):
        from blockcast import window_count

        started = time.perf_counter()
        assert window_count(1000, 720, 96) == 185
        assert window_count(815, 720, 96) == 0
        rng = np.random.default_rng(15)
        for _ in range(50):
            n = int(rng.integers(1, 80))
            T = int(rng.integers(1, 14))
            L = int(rng.integers(1, 14))
            frame = random_walk_frame(rng, n)
            assert len(list(iter_windows(frame, T, L))) == window_count(n, T, L)
        assert time.perf_counter() - started < 1.0


def test_criterion_8_etth1_desk_scale_reproduction(etth1_desk):
    with criterion(8, "ETTh1 desk-scale reproduction and paradigm ordering"):
        started = time.perf_counter()
        frames, split = etth1_desk["frames"], etth1_desk["split"]
        direct_96 = evaluate(
            etth1_desk["models"][96], frames["test"],
            EvalConfig("direct", 720, 96, 96), split.test_context,
        )
        recursive_192 = evaluate(
            etth1_desk["models"][192], frames["test"],
            EvalConfig("recursive", 720, 192, 96), split.test_context,
        )
        published = 0.404
        within = abs(direct_96.mse - published) <= 0.10 * published
        print(
            f"\n  (a) coupled L=H=96 test MSE {direct_96.mse:.4f} vs published "
            f"{published} (+/-10%): {'within' if within else 'outside'}"
            f"\n  (b) decoupled L=192 @ H=96 MSE {recursive_192.mse:.4f} "
            f"vs coupled {direct_96.mse:.4f}"
        )
        assert within, (
            f"coupled-mode MSE {direct_96.mse:.4f} outside 0.404 +/- 10%"
        )
        # the gating check: the decoupled configuration wins at H=96
        assert recursive_192.mse < direct_96.mse
        total = etth1_desk["train_seconds"] + (time.perf_counter() - started)
        assert total < 600.0


def test_criterion_9_one_training_session_serves_all_horizons(etth1_frame):
    with criterion(9, "one (T=720, L=192) training session yields all four horizons"):
        result = sweep(
            etth1_frame,
            SplitSpec(6, 2, 2),
            ForecasterSpec("decomp_linear", T=720, L=192, C=7, seed=0),
            TrainConfig(max_epochs=2, patience=2, learning_rate=3e-5, shuffle_seed=4),
            T_values=[720],
            L_values=[192],
            H_values=[96, 192, 336, 720],
            modes=("recursive",),
            dataset_id="ETTh1",
        )
        ok = [r for r in result.records if r.status == "ok"]
        assert sorted(r.H for r in ok) == [96, 192, 336, 720]
        assert len(result.train_runs) == 1
        assert all(r.n_windows >= 1 for r in ok)


def test_criterion_10_extreme_extrapolation_single_window(etth1_desk):
    with criterion(10, "extreme extrapolation reaches the single-window limit"):
        started = time.perf_counter()
        model = etth1_desk["models"][96]
        test = etth1_desk["frames"]["test"]
        context = etth1_desk["split"].test_context
        H_max = test.n_steps - 720
        records = extreme_horizon_eval(model, test, 720, [H_max], context)
        assert records[0].status == "ok"
        assert records[0].n_windows == 1
        assert math.isfinite(records[0].mse)

        x = test.values[:720]
        trace = rollout(model, x, H_max)
        assert trace.y_hat.shape == (H_max, 7)
        assert np.isfinite(trace.y_hat).all()
        assert time.perf_counter() - started < 30.0


def test_criterion_11_win_ratio_arithmetic():
    with criterion(11, "win-ratio arithmetic: 3-of-4 cells and all-tie sweeps"):
        def rec(H, mode, mse, mae, L):
            return EvalRecord("m", "d", 720, L, H, mode, mse, mae, 5)

        records = [
            rec(96, "recursive", 0.30, 0.40, 192),
            rec(96, "direct", 0.35, 0.45, 96),
            rec(192, "recursive", 0.50, 0.52, 192),
            rec(192, "direct", 0.55, 0.50, 192),
        ]
        comp = WinComparison("x", left={"mode": "recursive"}, right={"mode": "direct"})
        summary = win_ratio(records, comp)
        assert summary.win_ratio == 0.75

        tied = [
            rec(96, "recursive", 0.3, 0.4, 192),
            rec(96, "direct", 0.3, 0.4, 96),
            rec(192, "recursive", 0.5, 0.5, 192),
            rec(192, "direct", 0.5, 0.5, 192),
        ]
        summary = win_ratio(tied, comp)
        assert summary.wins == 0 and summary.ties == 4
        assert summary.win_ratio == 1.0
