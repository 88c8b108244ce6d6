"""Translate configurations into layer stacks and train them.

Three architectures are supported, each ending in a dense head with two
outputs (slope angle, duration):

  * MLP:  N in [1, 5] dense+relu blocks; dropout follows blocks 1, 3 and 5
    except when that block is the last one.
  * LSTM: N in [1, 3] lstm+relu+dropout blocks.  Hidden state persists
    across batches and epochs (detached from the gradient between batches)
    rather than being re-initialised.
  * CNN:  N in [1, 3] conv1d+relu+pool+dropout blocks.

Training is mini-batch Adam over chronologically ordered batches with no
shuffling, for exactly the requested number of epochs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernel
from .errors import DomainError, InfeasibleConfigError, TrainingDivergedError
from .kernel import AdamState, LayerSpec
from .space import Configuration

__all__ = [
    "AlgorithmKind",
    "ModelPlan",
    "TrainSettings",
    "TrainedModel",
    "build_model",
    "train",
    "predict",
    "save_params",
    "load_params",
]


class AlgorithmKind(str, Enum):
    MLP = "MLP"
    LSTM = "LSTM"
    CNN = "CNN"


@dataclass(frozen=True)
class ModelPlan:
    """A concrete, shape-resolved layer stack for one window size."""

    algorithm: AlgorithmKind
    window_size: int
    layers: tuple[LayerSpec, ...]

    def prepare_input(self, windows: np.ndarray) -> np.ndarray:
        """Reshape a (batch, w) window matrix for the first layer."""
        windows = np.asarray(windows, dtype=float)
        if windows.ndim != 2 or windows.shape[1] != self.window_size:
            raise DomainError(
                f"expected windows of shape (batch, {self.window_size}), got {windows.shape}"
            )
        if self.algorithm is AlgorithmKind.MLP:
            return windows
        return windows[:, :, None]  # sequence of scalars: (batch, w, 1)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    batch_size: int
    learning_rate: float
    dropout_rate: float
    weight_decay: float
    seed: int

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainedModel:
    plan: ModelPlan
    params: list[dict[str, np.ndarray]]
    lstm_carry: dict[int, tuple[np.ndarray, np.ndarray]]
    loss_history: list[float]
    settings: TrainSettings | None = None


def settings_from_config(config: Configuration, epochs: int, seed: int) -> TrainSettings:
    return TrainSettings(
        epochs=epochs,
        batch_size=int(config["batch_size"]),
        learning_rate=float(config["learning_rate"]),
        dropout_rate=float(config["dropout_rate"]),
        weight_decay=float(config["weight_decay"]),
        seed=seed,
    )


def build_model(config: Configuration, window_size: int) -> ModelPlan:
    """Deterministically expand a configuration into a layer stack.

    Raises InfeasibleConfigError when CNN convolution/pooling arithmetic
    would collapse the sequence below one element for this window size.
    """
    if window_size < 1:
        raise DomainError(f"window_size must be >= 1, got {window_size}")
    algorithm = AlgorithmKind(config["algorithm"])
    rate = float(config["dropout_rate"])
    layers: list[LayerSpec] = []

    if algorithm is AlgorithmKind.MLP:
        n = int(config["mlp_layers"])
        width_in = window_size
        for i in range(1, n + 1):
            width_out = int(config[f"mlp_width_{i}"])
            layers.append(LayerSpec.dense(width_in, width_out))
            layers.append(LayerSpec.relu())
            if i % 2 == 1 and i != n:
                layers.append(LayerSpec.dropout(rate))
            width_in = width_out
        layers.append(LayerSpec.dense(width_in, 2))

    elif algorithm is AlgorithmKind.LSTM:
        n = int(config["lstm_layers"])
        dim = 1
        for i in range(1, n + 1):
            cells = int(config[f"lstm_cells_{i}"])
            layers.append(LayerSpec.lstm(dim, cells))
            layers.append(LayerSpec.relu())
            layers.append(LayerSpec.dropout(rate))
            dim = cells
        layers.append(LayerSpec.dense(window_size * dim, 2))

    else:
        n = int(config["cnn_layers"])
        pool_type = str(config["cnn_pool_type"])
        pool_size = int(config["cnn_pool_size"])
        length = window_size
        channels = 1
        for i in range(1, n + 1):
            filters = int(config[f"cnn_filters_{i}"])
            ksize = int(config[f"cnn_kernel_{i}"])
            conv_len = length - ksize + 1
            pooled_len = conv_len // pool_size if conv_len >= 1 else 0
            if pooled_len < 1:
                raise InfeasibleConfigError(
                    f"CNN block {i} (kernel {ksize}, pool {pool_size}) reduces length "
                    f"{length} to {pooled_len} for window size {window_size}"
                )
            layers.append(LayerSpec.conv1d(channels, filters, ksize))
            layers.append(LayerSpec.relu())
            layers.append(LayerSpec.pool(pool_type, pool_size))
            layers.append(LayerSpec.dropout(rate))
            length = pooled_len
            channels = filters
        layers.append(LayerSpec.dense(length * channels, 2))

    return ModelPlan(algorithm=algorithm, window_size=window_size, layers=tuple(layers))


def _forward_stack(plan, params, x, mode, rng, carry):
    """Forward through all layers; returns (output, caches, new_carry)."""
    caches = []
    new_carry = dict(carry)
    for idx, spec in enumerate(plan.layers):
        state_in = carry.get(idx) if spec.kind == "lstm" else None
        x, cache = kernel.layer_forward(spec, params[idx], x, mode=mode, rng=rng,
                                        state_in=state_in)
        if spec.kind == "lstm":
            new_carry[idx] = cache["carry_out"]
        caches.append(cache)
    return x, caches, new_carry


def train(plan: ModelPlan, windows: np.ndarray, targets: np.ndarray,
          settings: TrainSettings) -> TrainedModel:
    """Train a fresh model for exactly ``settings.epochs`` epochs.

    Batches are chronological slices of the training set; the recurrent
    carry state of lstm layers survives across batches and epochs but is
    treated as a constant by backpropagation.
    """
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(windows) == 0:
        raise DomainError("empty training set")
    if len(windows) != len(targets):
        raise DomainError(f"{len(windows)} windows but {len(targets)} targets")

    rng = np.random.default_rng(np.random.SeedSequence(settings.seed & (2**64 - 1)))
    params = [kernel.init_params(spec, rng) for spec in plan.layers]
    flat_params = {
        f"layer{idx}.{name}": arr
        for idx, layer in enumerate(params)
        for name, arr in layer.items()
    }
    state = AdamState()
    carry: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    n = len(windows)
    bs = settings.batch_size
    history: list[float] = []

    for epoch in range(settings.epochs):
        epoch_sse = 0.0
        for start in range(0, n, bs):
            xb = plan.prepare_input(windows[start : start + bs])
            yb = targets[start : start + bs]
            out, caches, carry = _forward_stack(plan, params, xb, "train", rng, carry)
            loss, dpred = kernel.composite_loss(out, yb)
            if not np.isfinite(loss.total):
                raise TrainingDivergedError(epoch)
            epoch_sse += loss.total * len(yb)
            grad = dpred
            flat_grads = {}
            for idx in range(len(plan.layers) - 1, -1, -1):
                grad, layer_grads = kernel.layer_backward(
                    plan.layers[idx], params[idx], caches[idx], grad
                )
                for name, g in layer_grads.items():
                    flat_grads[f"layer{idx}.{name}"] = g
            kernel.adam_step(flat_params, flat_grads, state,
                             lr=settings.learning_rate,
                             weight_decay=settings.weight_decay)
        history.append(epoch_sse / n)

    return TrainedModel(plan=plan, params=params, lstm_carry=carry,
                        loss_history=history, settings=settings)


def predict(model: TrainedModel, windows: np.ndarray) -> np.ndarray:
    """Evaluation-mode predictions, shape (n, 2): (slope_deg, duration).

    Dropout is disabled and the recurrent carry state is read but never
    mutated, so repeated calls return identical outputs.  Duration stays a
    real value; no rounding is applied.
    """
    x = model.plan.prepare_input(windows)
    out, _, _ = _forward_stack(model.plan, model.params, x, "eval", None, model.lstm_carry)
    return out


def save_params(model: TrainedModel, path) -> None:
    """Write parameters as a length-prefixed shape list followed by the
    concatenated little-endian float64 data."""
    arrays = [arr for layer in model.params for _, arr in sorted(layer.items())]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        for arr in arrays:
            fh.write(arr.astype("<f8").tobytes(order="C"))


def load_params(plan: ModelPlan, path) -> TrainedModel:
    """Rebuild a TrainedModel for ``plan`` from :func:`save_params` output."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0
    (n_arrays,) = struct.unpack_from("<I", blob, off)
    off += 4
    shapes = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        shapes.append(tuple(int(s) for s in shape))
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
        arrays.append(arr)

    rng = np.random.default_rng(0)
    params = [kernel.init_params(spec, rng) for spec in plan.layers]
    it = iter(arrays)
    for layer in params:
        for name in sorted(layer):
            arr = next(it)
            if arr.shape != layer[name].shape:
                raise DomainError(
                    f"stored parameter shape {arr.shape} does not match plan "
                    f"shape {layer[name].shape} for {name!r}"
                )
            layer[name] = arr
    return TrainedModel(plan=plan, params=params, lstm_carry={}, loss_history=[])
