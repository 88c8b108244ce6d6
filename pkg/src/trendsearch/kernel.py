"""Minimal neural network kernel with hand-written backpropagation.

Tensors are plain ``numpy.ndarray`` objects (row-major, float64).  The
layer vocabulary is closed: dense, relu, dropout, conv1d, pool, lstm.
Every forward and backward pass ends with a finiteness check; NaN or Inf
anywhere is a hard failure rather than a silent propagation.

Conventions:
  * dense accepts ``(batch, features)`` or any higher-rank input, which it
    flattens to ``(batch, -1)`` before the affine map;
  * conv1d/pool/lstm operate on ``(batch, length, channels)``;
  * conv1d is a valid cross-correlation with stride 1;
  * pooling windows are non-overlapping, a trailing partial window is
    dropped;
  * dropout is inverted (train-time scaling), so evaluation is identity;
  * lstm returns the full hidden-state sequence and reports the final
    state of its last batch row so callers can carry it forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError

__all__ = [
    "LayerSpec",
    "AdamState",
    "CompositeLoss",
    "he_init",
    "init_params",
    "layer_forward",
    "layer_backward",
    "composite_loss",
    "adam_step",
]

_KINDS = ("dense", "relu", "dropout", "conv1d", "pool", "lstm")


@dataclass(frozen=True)
class LayerSpec:
    """Description of one layer; dimension fields depend on ``kind``."""

    kind: str
    in_dim: int = 0       # dense input width, lstm input channels
    units: int = 0        # dense outputs, lstm cells
    rate: float = 0.0     # dropout
    in_channels: int = 0  # conv1d
    filters: int = 0      # conv1d
    kernel_size: int = 0  # conv1d
    pool_type: str = ""   # pool: "max" | "avg"
    size: int = 0         # pool window

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and (self.in_dim < 1 or self.units < 1):
            raise DomainError(f"dense needs in_dim, units >= 1, got {self.in_dim}, {self.units}")
        if self.kind == "dropout" and not (0.0 <= self.rate < 1.0):
            raise DomainError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.kind == "conv1d" and min(self.in_channels, self.filters, self.kernel_size) < 1:
            raise DomainError("conv1d needs in_channels, filters, kernel_size >= 1")
        if self.kind == "pool":
            if self.pool_type not in ("max", "avg"):
                raise DomainError(f"pool type must be 'max' or 'avg', got {self.pool_type!r}")
            if self.size < 1:
                raise DomainError(f"pool size must be >= 1, got {self.size}")
        if self.kind == "lstm" and (self.in_dim < 1 or self.units < 1):
            raise DomainError(f"lstm needs in_dim, units >= 1, got {self.in_dim}, {self.units}")

    @classmethod
    def dense(cls, in_dim, units):
        return cls(kind="dense", in_dim=in_dim, units=units)

    @classmethod
    def relu(cls):
        return cls(kind="relu")

    @classmethod
    def dropout(cls, rate):
        return cls(kind="dropout", rate=rate)

    @classmethod
    def conv1d(cls, in_channels, filters, kernel_size):
        return cls(kind="conv1d", in_channels=in_channels, filters=filters,
                   kernel_size=kernel_size)

    @classmethod
    def pool(cls, pool_type, size):
        return cls(kind="pool", pool_type=pool_type, size=size)

    @classmethod
    def lstm(cls, in_dim, cells):
        return cls(kind="lstm", in_dim=in_dim, units=cells)


def he_init(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Draw weights i.i.d. Normal(0, sqrt(2 / fan_in))."""
    if fan_in < 1:
        raise DomainError(f"fan_in must be >= 1, got {fan_in}")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_params(spec: LayerSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """He-initialized weights (fan-in mode) and zero biases for one layer."""
    if spec.kind == "dense":
        return {
            "w": he_init((spec.in_dim, spec.units), spec.in_dim, rng),
            "b": np.zeros(spec.units),
        }
    if spec.kind == "conv1d":
        fan_in = spec.kernel_size * spec.in_channels
        return {
            "w": he_init((spec.kernel_size, spec.in_channels, spec.filters), fan_in, rng),
            "b": np.zeros(spec.filters),
        }
    if spec.kind == "lstm":
        h = spec.units
        return {
            "wx": he_init((spec.in_dim, 4 * h), spec.in_dim, rng),
            "wh": he_init((h, 4 * h), h, rng),
            "b": np.zeros(4 * h),
        }
    return {}


def _ensure_finite(layer: str, what: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NumericalError(f"{layer}: non-finite values in {what}")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layer_forward(spec, params, x, mode="train", rng=None, state_in=None):
    """Run one layer forward; returns ``(output, cache)``.

    ``cache`` holds whatever the matching backward pass needs.  For lstm
    layers it additionally carries ``carry_out``, the (h, c) pair of the
    final timestep of the last batch row, detached from the graph.
    """
    x = np.asarray(x, dtype=float)
    if mode not in ("train", "eval"):
        raise DomainError(f"mode must be 'train' or 'eval', got {mode!r}")

    if spec.kind == "dense":
        orig_shape = x.shape
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != spec.in_dim:
            raise DomainError(
                f"dense: expected {spec.in_dim} input features, got {flat.shape[1]} "
                f"(input shape {orig_shape})"
            )
        y = flat @ params["w"] + params["b"]
        cache = {"flat": flat, "orig_shape": orig_shape}

    elif spec.kind == "relu":
        y = np.maximum(x, 0.0)
        cache = {"x": x}

    elif spec.kind == "dropout":
        if mode == "train" and spec.rate > 0.0:
            if rng is None:
                raise DomainError("dropout in train mode needs an rng")
            mask = rng.random(x.shape) >= spec.rate
            y = x * mask / (1.0 - spec.rate)
            cache = {"mask": mask}
        else:
            y = x
            cache = {"mask": None}

    elif spec.kind == "conv1d":
        if x.ndim != 3 or x.shape[2] != spec.in_channels:
            raise DomainError(
                f"conv1d: expected (batch, length, {spec.in_channels}), got {x.shape}"
            )
        k = spec.kernel_size
        if x.shape[1] < k:
            raise DomainError(f"conv1d: length {x.shape[1]} shorter than kernel {k}")
        windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)
        y = np.einsum("blck,kcf->blf", windows, params["w"]) + params["b"]
        cache = {"x": x}

    elif spec.kind == "pool":
        if x.ndim != 3:
            raise DomainError(f"pool: expected (batch, length, channels), got {x.shape}")
        b, length, c = x.shape
        n_win = length // spec.size
        if n_win < 1:
            raise DomainError(f"pool: length {length} shorter than window {spec.size}")
        trimmed = x[:, : n_win * spec.size, :].reshape(b, n_win, spec.size, c)
        if spec.pool_type == "max":
            idx = trimmed.argmax(axis=2)
            y = np.take_along_axis(trimmed, idx[:, :, None, :], axis=2)[:, :, 0, :]
            cache = {"idx": idx, "in_shape": x.shape}
        else:
            y = trimmed.mean(axis=2)
            cache = {"in_shape": x.shape}

    elif spec.kind == "lstm":
        if x.ndim != 3 or x.shape[2] != spec.in_dim:
            raise DomainError(f"lstm: expected (batch, length, {spec.in_dim}), got {x.shape}")
        b, t_steps, _ = x.shape
        h_dim = spec.units
        if state_in is None:
            h = np.zeros((b, h_dim))
            c = np.zeros((b, h_dim))
        else:
            h0, c0 = state_in
            h = np.broadcast_to(np.asarray(h0, dtype=float), (b, h_dim)).copy()
            c = np.broadcast_to(np.asarray(c0, dtype=float), (b, h_dim)).copy()
        hs = np.empty((t_steps + 1, b, h_dim))
        cs = np.empty((t_steps + 1, b, h_dim))
        gates = np.empty((t_steps, b, 4 * h_dim))
        hs[0], cs[0] = h, c
        wx, wh, bias = params["wx"], params["wh"], params["b"]
        zx = x @ wx + bias  # input projection for all timesteps at once
        for t in range(t_steps):
            z = zx[:, t, :] + hs[t] @ wh
            i = _sigmoid(z[:, :h_dim])
            f = _sigmoid(z[:, h_dim : 2 * h_dim])
            g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            o = _sigmoid(z[:, 3 * h_dim :])
            cs[t + 1] = f * cs[t] + i * g
            hs[t + 1] = o * np.tanh(cs[t + 1])
            gates[t] = np.concatenate([i, f, g, o], axis=1)
        y = hs[1:].transpose(1, 0, 2)  # (batch, time, cells)
        cache = {
            "x": x,
            "hs": hs,
            "cs": cs,
            "gates": gates,
            "carry_out": (hs[-1][-1].copy(), cs[-1][-1].copy()),
        }

    else:  # pragma: no cover - guarded by LayerSpec
        raise DomainError(f"unknown layer kind {spec.kind!r}")

    _ensure_finite(spec.kind, "forward output", y)
    return y, cache


def layer_backward(spec, params, cache, dy):
    """Exact gradients of :func:`layer_forward`; returns ``(dx, param_grads)``."""
    dy = np.asarray(dy, dtype=float)

    if spec.kind == "dense":
        flat = cache["flat"]
        if dy.shape != (flat.shape[0], spec.units):
            raise DomainError(f"dense backward: gradient shape {dy.shape} does not match output")
        grads = {"w": flat.T @ dy, "b": dy.sum(axis=0)}
        dx = (dy @ params["w"].T).reshape(cache["orig_shape"])

    elif spec.kind == "relu":
        dx = dy * (cache["x"] > 0)
        grads = {}

    elif spec.kind == "dropout":
        mask = cache["mask"]
        dx = dy if mask is None else dy * mask / (1.0 - spec.rate)
        grads = {}

    elif spec.kind == "conv1d":
        x = cache["x"]
        k = spec.kernel_size
        n_out = x.shape[1] - k + 1
        if dy.shape != (x.shape[0], n_out, spec.filters):
            raise DomainError(f"conv1d backward: gradient shape {dy.shape} does not match output")
        w = params["w"]
        dw = np.empty_like(w)
        dx = np.zeros_like(x)
        for j in range(k):
            dw[j] = np.einsum("blc,blf->cf", x[:, j : j + n_out, :], dy)
            dx[:, j : j + n_out, :] += np.einsum("blf,cf->blc", dy, w[j])
        grads = {"w": dw, "b": dy.sum(axis=(0, 1))}

    elif spec.kind == "pool":
        b, length, c = cache["in_shape"]
        n_win = length // spec.size
        dx = np.zeros((b, length, c))
        view = dx[:, : n_win * spec.size, :].reshape(b, n_win, spec.size, c)
        if spec.pool_type == "max":
            np.put_along_axis(view, cache["idx"][:, :, None, :], dy[:, :, None, :], axis=2)
        else:
            view += dy[:, :, None, :] / spec.size
        grads = {}

    elif spec.kind == "lstm":
        x, hs, cs, gates = cache["x"], cache["hs"], cache["cs"], cache["gates"]
        b, t_steps, _ = x.shape
        h_dim = spec.units
        dy = dy.transpose(1, 0, 2)  # (time, batch, cells)
        wx, wh = params["wx"], params["wh"]
        dz_all = np.empty((t_steps, b, 4 * h_dim))
        dh_next = np.zeros((b, h_dim))
        dc_next = np.zeros((b, h_dim))
        for t in range(t_steps - 1, -1, -1):
            i = gates[t][:, :h_dim]
            f = gates[t][:, h_dim : 2 * h_dim]
            g = gates[t][:, 2 * h_dim : 3 * h_dim]
            o = gates[t][:, 3 * h_dim :]
            tanh_c = np.tanh(cs[t + 1])
            dh = dy[t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            di = dc * g
            df = dc * cs[t]
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dz_all[t] = dz
            dh_next = dz @ wh.T
            dc_next = dc * f
        grads = {
            "wx": np.einsum("btd,tbh->dh", x, dz_all),
            "wh": np.einsum("tbd,tbh->dh", hs[:-1], dz_all),
            "b": dz_all.sum(axis=(0, 1)),
        }
        dx = np.einsum("tbh,dh->btd", dz_all, wx)

    else:  # pragma: no cover
        raise DomainError(f"unknown layer kind {spec.kind!r}")

    _ensure_finite(spec.kind, "backward gradients", dx, *grads.values())
    return dx, grads


@dataclass(frozen=True)
class CompositeLoss:
    """Equally weighted slope/duration mean square error."""

    slope_mse: float
    duration_mse: float

    @property
    def total(self) -> float:
        return (self.slope_mse + self.duration_mse) / 2.0


def composite_loss(pred: np.ndarray, target: np.ndarray) -> tuple[CompositeLoss, np.ndarray]:
    """Loss over a ``(batch, 2)`` prediction with columns (slope, duration).

    Returns the loss breakdown and its exact gradient with respect to the
    predictions.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise DomainError(f"predictions/targets must both be (batch, 2), got {pred.shape} and {target.shape}")
    n = pred.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    err = pred - target
    loss = CompositeLoss(
        slope_mse=float(np.mean(err[:, 0] ** 2)),
        duration_mse=float(np.mean(err[:, 1] ** 2)),
    )
    return loss, err / n


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update, in place.

    Weight decay enters as an additive ``weight_decay * theta`` term on the
    gradient (coupled L2).
    """
    state.t += 1
    t = state.t
    for name, theta in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        if weight_decay:
            g = g + weight_decay * theta
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
