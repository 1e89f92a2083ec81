"""Fixed-window forecasters: (T x C) input -> (L x C) prediction.

Four families are provided:

* ``naive_seasonal`` -- parameter-free periodic copy baseline.
* ``linear_direct``  -- one affine map per output step over the input window.
* ``decomp_linear``  -- moving-average trend/seasonal decomposition with an
  independent affine map per component, summed.
* ``mlp``            -- one hidden ReLU layer, applied channel-wise.

All parameterized families expose the exact analytic gradient of the mean
squared error restricted to an arbitrary output time segment. Everything is
float64 and deterministic: two models built from equal specs produce
bitwise-equal predictions.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import WindowSample
from .errors import (
    EmptyBatch,
    EmptySegment,
    InvalidSpec,
    LengthMismatch,
    ShapeMismatch,
)

KINDS = ("naive_seasonal", "linear_direct", "decomp_linear", "mlp")


@dataclass(frozen=True)
class SegmentSpec:
    """Half-open range [start, end) over the 0-based output steps."""

    start: int
    end: int

    @property
    def width(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    T: int
    L: int
    C: int
    period: int = 1           # naive_seasonal only
    per_channel: bool = False  # linear kinds only
    kernel_width: int = 25     # decomp_linear only
    hidden_width: int = 128    # mlp only
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.T < 1 or self.L < 1 or self.C < 1:
            raise InvalidSpec("T, L and C must all be >= 1")
        if self.kind == "naive_seasonal" and not (1 <= self.period <= self.T):
            raise InvalidSpec("period must satisfy 1 <= period <= T")
        if self.kind == "decomp_linear":
            k = self.kernel_width
            if k < 1 or k % 2 == 0 or k > self.T:
                raise InvalidSpec("kernel_width must be odd and in [1, T]")
        if self.kind == "mlp" and self.hidden_width < 1:
            raise InvalidSpec("hidden_width must be >= 1")


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter vector plus a (name, start, stop) block layout."""

    values: np.ndarray
    layout: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64)
        )


def moving_average(x: np.ndarray, kernel_width: int) -> np.ndarray:
    """Centered moving average along axis -2 with edge-replication padding.

    Output length equals input length; kernel_width must be odd.
    """
    pad = (kernel_width - 1) // 2
    if pad == 0:
        return x.astype(np.float64, copy=True)
    first = np.repeat(x[..., :1, :], pad, axis=-2)
    last = np.repeat(x[..., -1:, :], pad, axis=-2)
    padded = np.concatenate([first, x, last], axis=-2)
    zero = np.zeros_like(padded[..., :1, :])
    cs = np.concatenate([zero, np.cumsum(padded, axis=-2)], axis=-2)
    sums = cs[..., kernel_width:, :] - cs[..., :-kernel_width, :]
    return sums / kernel_width


def _linear_forward(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Channel-shared affine map: out[n,l,c] = sum_t W[l,t] X[n,t,c] + b[l]."""
    out = np.tensordot(X, W, axes=([1], [1]))  # (N, C, L)
    return out.transpose(0, 2, 1) + b[None, :, None]


def _linear_forward_pc(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Per-channel affine maps: out[n,l,c] = sum_t W[c,l,t] X[n,t,c] + b[c,l]."""
    out = np.einsum("clt,ntc->nlc", W, X, optimize=True)
    return out + b.T[None, :, :]


def _linear_grads(Gs: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weight/bias gradients of the shared map over the segment rows only."""
    dW = np.tensordot(Gs, X, axes=([0, 2], [0, 2]))  # (seg, T)
    db = Gs.sum(axis=(0, 2))
    return dW, db


def _linear_grads_pc(Gs: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dW = np.einsum("nlc,ntc->clt", Gs, X, optimize=True)  # (C, seg, T)
    db = Gs.sum(axis=0).T  # (C, seg)
    return dW, db


class Forecaster:
    """Base class: parameter bookkeeping plus the shared loss/grad contract."""

    def __init__(self, spec: ForecasterSpec):
        spec.validate()
        self.spec = spec
        self._layout = self._build_layout()
        self._p = np.zeros(self.num_params, dtype=np.float64)
        self._init_params()

    # -- subclass hooks -------------------------------------------------

    def _build_layout(self) -> tuple[tuple[str, int, int], ...]:
        raise NotImplementedError

    def _init_params(self) -> None:
        raise NotImplementedError

    def _forward(self, X: np.ndarray) -> np.ndarray:
        """Batched prediction: (N, T, C) -> (N, L, C)."""
        raise NotImplementedError

    def _backward(self, X: np.ndarray, Gs: np.ndarray, seg: SegmentSpec) -> np.ndarray:
        """Flat gradient given d(loss)/d(prediction) over the segment rows."""
        raise NotImplementedError

    # -- public API ------------------------------------------------------

    @property
    def num_params(self) -> int:
        return self._layout[-1][2] if self._layout else 0

    @property
    def layout(self) -> tuple[tuple[str, int, int], ...]:
        return self._layout

    def _block(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        for nm, a, b in self._layout:
            if nm == name:
                return self._p[a:b].reshape(shape)
        raise KeyError(name)

    def get_params(self) -> ParamVector:
        return ParamVector(self._p.copy(), self._layout)

    def set_params(self, p: ParamVector | np.ndarray) -> None:
        values = p.values if isinstance(p, ParamVector) else np.asarray(p)
        if values.shape != (self.num_params,):
            raise LengthMismatch(
                f"expected {self.num_params} parameters, got {values.shape}"
            )
        self._p[:] = values

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.spec.T, self.spec.C):
            raise ShapeMismatch(
                f"input shape {x.shape} != (T={self.spec.T}, C={self.spec.C})"
            )
        return self._forward(x[None])[0]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.spec.T, self.spec.C):
            raise ShapeMismatch(
                f"batch shape {X.shape} != (N, T={self.spec.T}, C={self.spec.C})"
            )
        return self._forward(X)

    def loss_and_grad(
        self,
        batch: Sequence[WindowSample] | tuple[np.ndarray, np.ndarray],
        segment: SegmentSpec | None = None,
    ) -> tuple[float, ParamVector]:
        """Mean squared error over (samples x segment steps x channels), and
        its exact gradient with respect to the flat parameter vector."""
        if isinstance(batch, tuple):
            X, Y = batch
        else:
            if len(batch) == 0:
                raise EmptyBatch("batch has no samples")
            X = np.stack([s.x for s in batch])
            Y = np.stack([s.y for s in batch])
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.shape[0] == 0:
            raise EmptyBatch("batch has no samples")
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        if X.shape != (X.shape[0], T, C) or Y.shape != (X.shape[0], L, C):
            raise ShapeMismatch(f"batch shapes {X.shape}, {Y.shape} do not match spec")
        seg = segment or SegmentSpec(0, L)
        if not (0 <= seg.start and seg.end <= L):
            raise ValueError(f"segment [{seg.start}, {seg.end}) outside [0, {L})")
        if seg.width <= 0:
            raise EmptySegment(f"segment [{seg.start}, {seg.end}) selects no steps")

        pred = self._forward(X)
        err = pred[:, seg.start : seg.end, :] - Y[:, seg.start : seg.end, :]
        denom = err.size
        loss = float(np.sum(err * err) / denom)
        if self.num_params == 0:
            return loss, ParamVector(np.zeros(0), self._layout)
        Gs = (2.0 / denom) * err
        return loss, ParamVector(self._backward(X, Gs, seg), self._layout)


class NaiveSeasonal(Forecaster):
    """Copies the last observed period forward: out[j] = x[T - p + (j mod p)]."""

    def _build_layout(self):
        return ()

    def _init_params(self):
        pass

    def _forward(self, X):
        T, L = self.spec.T, self.spec.L
        p = self.spec.period
        src = T - p + (np.arange(L) % p)
        return X[:, src, :].copy()

    def _backward(self, X, Gs, seg):
        return np.zeros(0)


class LinearDirect(Forecaster):
    """Affine map from the input window to the output horizon.

    With ``per_channel=False`` one (L x T) weight matrix and length-L bias are
    shared across channels and applied channel-wise; otherwise each channel
    owns its own pair.
    """

    def _build_layout(self):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        blocks = []
        pos = 0
        if self.spec.per_channel:
            for c in range(C):
                blocks.append((f"ch{c}.weight", pos, pos + L * T)); pos += L * T
                blocks.append((f"ch{c}.bias", pos, pos + L)); pos += L
        else:
            blocks.append(("weight", pos, pos + L * T)); pos += L * T
            blocks.append(("bias", pos, pos + L)); pos += L
        return tuple(blocks)

    def _init_params(self):
        rng = np.random.default_rng(self.spec.seed)
        T = self.spec.T
        for name, a, b in self._layout:
            if name.endswith("weight"):
                self._p[a:b] = rng.uniform(-1.0 / T, 1.0 / T, size=b - a)

    def _weights(self):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        if self.spec.per_channel:
            W = np.stack([self._block(f"ch{c}.weight", (L, T)) for c in range(C)])
            b = np.stack([self._block(f"ch{c}.bias", (L,)) for c in range(C)])
            return W, b
        return self._block("weight", (L, T)), self._block("bias", (L,))

    def _forward(self, X):
        W, b = self._weights()
        if self.spec.per_channel:
            return _linear_forward_pc(W, b, X)
        return _linear_forward(W, b, X)

    def _backward(self, X, Gs, seg):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        grad = np.zeros(self.num_params)
        if self.spec.per_channel:
            dW, db = _linear_grads_pc(Gs, X)
            for c in range(C):
                gW = grad[self._span(f"ch{c}.weight")].reshape(L, T)
                gW[seg.start : seg.end] = dW[c]
                grad[self._span(f"ch{c}.bias")][seg.start : seg.end] = db[c]
        else:
            dW, db = _linear_grads(Gs, X)
            grad[self._span("weight")].reshape(L, T)[seg.start : seg.end] = dW
            grad[self._span("bias")][seg.start : seg.end] = db
        return grad

    def _span(self, name):
        for nm, a, b in self._layout:
            if nm == name:
                return slice(a, b)
        raise KeyError(name)


class DecompLinear(Forecaster):
    """Trend/seasonal decomposition with independent affine maps, summed.

    Trend is the centered moving average (edge replication) of the input;
    seasonal is the residual. Both component maps follow the LinearDirect
    sharing convention.
    """

    def _build_layout(self):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        blocks = []
        pos = 0
        for comp in ("trend", "seasonal"):
            if self.spec.per_channel:
                for c in range(C):
                    blocks.append((f"{comp}.ch{c}.weight", pos, pos + L * T)); pos += L * T
                    blocks.append((f"{comp}.ch{c}.bias", pos, pos + L)); pos += L
            else:
                blocks.append((f"{comp}.weight", pos, pos + L * T)); pos += L * T
                blocks.append((f"{comp}.bias", pos, pos + L)); pos += L
        return tuple(blocks)

    def _init_params(self):
        rng = np.random.default_rng(self.spec.seed)
        T = self.spec.T
        for name, a, b in self._layout:
            if name.endswith("weight"):
                self._p[a:b] = rng.uniform(-1.0 / T, 1.0 / T, size=b - a)

    def _component_weights(self, comp: str):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        if self.spec.per_channel:
            W = np.stack([self._block(f"{comp}.ch{c}.weight", (L, T)) for c in range(C)])
            b = np.stack([self._block(f"{comp}.ch{c}.bias", (L,)) for c in range(C)])
            return W, b
        return self._block(f"{comp}.weight", (L, T)), self._block(f"{comp}.bias", (L,))

    def _decompose(self, X):
        trend = moving_average(X, self.spec.kernel_width)
        return trend, X - trend

    def _forward(self, X):
        trend, seasonal = self._decompose(X)
        fwd = _linear_forward_pc if self.spec.per_channel else _linear_forward
        Wt, bt = self._component_weights("trend")
        Ws, bs = self._component_weights("seasonal")
        return fwd(Wt, bt, trend) + fwd(Ws, bs, seasonal)

    def _backward(self, X, Gs, seg):
        T, L, C = self.spec.T, self.spec.L, self.spec.C
        trend, seasonal = self._decompose(X)
        grad = np.zeros(self.num_params)
        spans = {nm: slice(a, b) for nm, a, b in self._layout}
        for comp, Xc in (("trend", trend), ("seasonal", seasonal)):
            if self.spec.per_channel:
                dW, db = _linear_grads_pc(Gs, Xc)
                for c in range(C):
                    gW = grad[spans[f"{comp}.ch{c}.weight"]].reshape(L, T)
                    gW[seg.start : seg.end] = dW[c]
                    grad[spans[f"{comp}.ch{c}.bias"]][seg.start : seg.end] = db[c]
            else:
                dW, db = _linear_grads(Gs, Xc)
                grad[spans[f"{comp}.weight"]].reshape(L, T)[seg.start : seg.end] = dW
                grad[spans[f"{comp}.bias"]][seg.start : seg.end] = db
        return grad


class Mlp(Forecaster):
    """One-hidden-layer ReLU network applied to each channel independently,
    with weights shared across channels."""

    def _build_layout(self):
        T, L = self.spec.T, self.spec.L
        hw = self.spec.hidden_width
        blocks = []
        pos = 0
        blocks.append(("layer1.weight", pos, pos + hw * T)); pos += hw * T
        blocks.append(("layer1.bias", pos, pos + hw)); pos += hw
        blocks.append(("layer2.weight", pos, pos + L * hw)); pos += L * hw
        blocks.append(("layer2.bias", pos, pos + L)); pos += L
        return tuple(blocks)

    def _init_params(self):
        rng = np.random.default_rng(self.spec.seed)
        T, hw = self.spec.T, self.spec.hidden_width
        w1 = self._span("layer1.weight")
        w2 = self._span("layer2.weight")
        self._p[w1] = rng.uniform(-1.0 / np.sqrt(T), 1.0 / np.sqrt(T), size=w1.stop - w1.start)
        self._p[w2] = rng.uniform(-1.0 / np.sqrt(hw), 1.0 / np.sqrt(hw), size=w2.stop - w2.start)

    def _span(self, name):
        for nm, a, b in self._layout:
            if nm == name:
                return slice(a, b)
        raise KeyError(name)

    def _tensors(self):
        T, L, hw = self.spec.T, self.spec.L, self.spec.hidden_width
        return (
            self._block("layer1.weight", (hw, T)),
            self._block("layer1.bias", (hw,)),
            self._block("layer2.weight", (L, hw)),
            self._block("layer2.bias", (L,)),
        )

    def _fold(self, X):
        # (N, T, C) -> (N*C, T): channels become independent samples
        N = X.shape[0]
        return X.transpose(0, 2, 1).reshape(N * self.spec.C, self.spec.T)

    def _forward(self, X):
        W1, b1, W2, b2 = self._tensors()
        N = X.shape[0]
        Z = self._fold(X)
        H = Z @ W1.T + b1
        A = np.maximum(H, 0.0)
        out = A @ W2.T + b2
        return out.reshape(N, self.spec.C, self.spec.L).transpose(0, 2, 1)

    def _backward(self, X, Gs, seg):
        W1, b1, W2, b2 = self._tensors()
        N = X.shape[0]
        Z = self._fold(X)
        H = Z @ W1.T + b1
        A = np.maximum(H, 0.0)
        # (N, seg, C) -> (N*C, seg)
        G2 = Gs.transpose(0, 2, 1).reshape(N * self.spec.C, seg.width)

        grad = np.zeros(self.num_params)
        L, hw = self.spec.L, self.spec.hidden_width
        gW2 = grad[self._span("layer2.weight")].reshape(L, hw)
        gW2[seg.start : seg.end] = G2.T @ A
        grad[self._span("layer2.bias")][seg.start : seg.end] = G2.sum(axis=0)
        GH = (G2 @ W2[seg.start : seg.end]) * (H > 0.0)
        grad[self._span("layer1.weight")] = (GH.T @ Z).ravel()
        grad[self._span("layer1.bias")] = GH.sum(axis=0)
        return grad


_CLASSES = {
    "naive_seasonal": NaiveSeasonal,
    "linear_direct": LinearDirect,
    "decomp_linear": DecompLinear,
    "mlp": Mlp,
}


def build(spec: ForecasterSpec) -> Forecaster:
    """Construct a forecaster with deterministically seeded parameters."""
    spec.validate()
    return _CLASSES[spec.kind](spec)


def to_checkpoint(model: Forecaster) -> dict:
    """Checkpoint document: spec fields plus decimal-serialized parameters.

    Python's float repr is the shortest exact round-trip, so loading
    reproduces bitwise-equal predictions.
    """
    return {"spec": asdict(model.spec), "param_values": model._p.tolist()}


def from_checkpoint(doc: dict) -> Forecaster:
    spec = ForecasterSpec(**doc["spec"])
    model = build(spec)
    values = np.asarray(doc["param_values"], dtype=np.float64)
    if values.shape != (model.num_params,):
        raise LengthMismatch(
            f"checkpoint has {values.shape[0]} values, model needs {model.num_params}"
        )
    model.set_params(values)
    return model


def save_checkpoint(model: Forecaster, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(to_checkpoint(model), fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path) -> Forecaster:
    with open(path, encoding="utf-8") as fh:
        return from_checkpoint(json.load(fh))
