"""Stacked LSTM regressor with explicit backpropagation through time.

Pure numpy, float64. A window of shape (L, m) runs through the stacked
recurrence; the final top-layer hidden state feeds a dense head that emits
the RUL estimate. Inter-layer dropout is inverted (scaled at train time) so
inference needs no rescaling. Everything is deterministic for a fixed seed
and single-threaded execution.

Gate order in the fused weight blocks is (input, forget, candidate, output).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (
    ConfigError,
    InsufficientDataError,
    IntegrityError,
    NumericError,
    ShapeError,
)
from .labeling import WindowedDataset

GATE_NAMES = ("input", "forget", "candidate", "output")


@dataclass
class LstmLayerParams:
    """Per-gate input weights (h, d_in), recurrent weights (h, h), biases (h,)."""

    w_input: np.ndarray
    w_forget: np.ndarray
    w_candidate: np.ndarray
    w_output: np.ndarray
    r_input: np.ndarray
    r_forget: np.ndarray
    r_candidate: np.ndarray
    r_output: np.ndarray
    b_input: np.ndarray
    b_forget: np.ndarray
    b_candidate: np.ndarray
    b_output: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]

    def fused(self):
        """Stack gates into (4h, d), (4h, h), (4h,) blocks for batched matmuls."""
        wx = np.vstack([self.w_input, self.w_forget, self.w_candidate, self.w_output])
        wh = np.vstack([self.r_input, self.r_forget, self.r_candidate, self.r_output])
        b = np.concatenate([self.b_input, self.b_forget, self.b_candidate, self.b_output])
        return wx, wh, b


@dataclass
class LstmRegressor:
    """Stacked LSTM layers, inter-layer dropout ratios, and a dense head."""

    layers: list
    dropout_ratios: tuple
    head_w: np.ndarray
    head_b: np.ndarray  # shape (1,)
    seed: int
    label_cap: float = 130.0
    sequence_length: int | None = None

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_size

    @property
    def hidden_sizes(self) -> tuple:
        return tuple(layer.hidden_size for layer in self.layers)


def _init_layer(d_in: int, h: int, rng: np.random.Generator) -> LstmLayerParams:
    scale = 1.0 / np.sqrt(h)

    def mat(rows, cols):
        return rng.uniform(-scale, scale, size=(rows, cols))

    weights = {}
    for kind, cols in (("w", d_in), ("r", h)):
        for gate in GATE_NAMES:
            weights[f"{kind}_{gate}"] = mat(h, cols)
    biases = {f"b_{gate}": np.zeros(h) for gate in GATE_NAMES}
    biases["b_forget"] = np.ones(h)  # open forget gates stabilize early training
    return LstmLayerParams(**weights, **biases)


def init_regressor(
    input_dim: int,
    hidden_sizes,
    dropout_ratios,
    seed: int = 0,
    label_cap: float = 130.0,
    sequence_length: int | None = None,
) -> LstmRegressor:
    hidden_sizes = tuple(int(h) for h in hidden_sizes)
    dropout_ratios = tuple(float(d) for d in dropout_ratios)
    if not hidden_sizes or any(h < 1 for h in hidden_sizes):
        raise ConfigError(f"hidden sizes must be positive, got {hidden_sizes}")
    if len(dropout_ratios) != len(hidden_sizes) - 1:
        raise ConfigError(
            f"{len(hidden_sizes)} layers need {len(hidden_sizes) - 1} inter-layer "
            f"dropout ratios, got {len(dropout_ratios)}"
        )
    if any(not 0.0 <= d < 1.0 for d in dropout_ratios):
        raise ConfigError(f"dropout ratios must lie in [0, 1), got {dropout_ratios}")
    rng = np.random.default_rng(seed)
    layers = []
    d_in = input_dim
    for h in hidden_sizes:
        layers.append(_init_layer(d_in, h, rng))
        d_in = h
    scale = 1.0 / np.sqrt(hidden_sizes[-1])
    head_w = rng.uniform(-scale, scale, size=hidden_sizes[-1])
    return LstmRegressor(
        layers=layers,
        dropout_ratios=dropout_ratios,
        head_w=head_w,
        head_b=np.zeros(1),
        seed=seed,
        label_cap=label_cap,
        sequence_length=sequence_length,
    )


def iter_parameters(model: LstmRegressor):
    """Named views of every trainable array, in a fixed order."""
    out = []
    for idx, layer in enumerate(model.layers):
        for kind in ("w", "r", "b"):
            for gate in GATE_NAMES:
                name = f"layer{idx}.{kind}_{gate}"
                out.append((name, getattr(layer, f"{kind}_{gate}")))
    out.append(("head.w", model.head_w))
    out.append(("head.b", model.head_b))
    return out


def _sigmoid(x):
    return expit(x)


def _forward_batch(model: LstmRegressor, x: np.ndarray, training: bool, rng):
    """Run (B, L, d) windows through the stack; returns (yhat (B,), cache)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise ShapeError(
            f"window batch of shape {x.shape} does not match input dim {model.input_dim}"
        )
    batch, steps, _ = x.shape
    cache = []
    current = x
    for idx, layer in enumerate(model.layers):
        mask = None
        if idx > 0:
            ratio = model.dropout_ratios[idx - 1]
            if training and ratio > 0.0:
                if rng is None:
                    raise ConfigError("training-mode forward with dropout needs an rng")
                keep = 1.0 - ratio
                mask = (rng.random(current.shape) < keep) / keep
                current = current * mask
        h_size = layer.hidden_size
        wx, wh, b = layer.fused()
        gates_i = np.empty((batch, steps, h_size))
        gates_f = np.empty((batch, steps, h_size))
        gates_g = np.empty((batch, steps, h_size))
        gates_o = np.empty((batch, steps, h_size))
        cells = np.empty((batch, steps, h_size))
        cell_tanh = np.empty((batch, steps, h_size))
        hidden = np.empty((batch, steps, h_size))
        h_prev = np.zeros((batch, h_size))
        c_prev = np.zeros((batch, h_size))
        pre = current @ wx.T + b  # (B, L, 4h), input contribution of every step
        for t in range(steps):
            z = pre[:, t, :] + h_prev @ wh.T
            gi = _sigmoid(z[:, :h_size])
            gf = _sigmoid(z[:, h_size : 2 * h_size])
            gg = np.tanh(z[:, 2 * h_size : 3 * h_size])
            go = _sigmoid(z[:, 3 * h_size :])
            c = gf * c_prev + gi * gg
            tc = np.tanh(c)
            h = go * tc
            gates_i[:, t] = gi
            gates_f[:, t] = gf
            gates_g[:, t] = gg
            gates_o[:, t] = go
            cells[:, t] = c
            cell_tanh[:, t] = tc
            hidden[:, t] = h
            h_prev, c_prev = h, c
        if not np.all(np.isfinite(hidden)):
            bad = np.argwhere(~np.isfinite(hidden).all(axis=(0, 2)))
            step = int(bad[0][0]) if len(bad) else -1
            raise NumericError(f"non-finite activation in layer {idx} at step {step}")
        cache.append(
            {
                "inputs": current,
                "mask": mask,
                "i": gates_i,
                "f": gates_f,
                "g": gates_g,
                "o": gates_o,
                "c": cells,
                "tc": cell_tanh,
                "h": hidden,
            }
        )
        current = hidden
    final_hidden = current[:, -1, :]
    yhat = final_hidden @ model.head_w + model.head_b[0]
    return yhat, cache


def forward(model: LstmRegressor, window: np.ndarray, training: bool = False, rng=None):
    """Single-window forward pass; returns (estimate, cached activations)."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ShapeError(f"expected an (L, m) window, got shape {window.shape}")
    yhat, cache = _forward_batch(model, window[None, :, :], training, rng)
    return float(yhat[0]), cache


def _backward_batch(model: LstmRegressor, cache: list, dyhat: np.ndarray) -> dict:
    """Backpropagate d(loss)/d(yhat) through head and stacked recurrences."""
    grads = {}
    top = cache[-1]
    final_hidden = top["h"][:, -1, :]
    grads["head.w"] = final_hidden.T @ dyhat
    grads["head.b"] = np.array([dyhat.sum()])

    batch, steps, _ = top["h"].shape
    d_hidden = np.zeros_like(top["h"])
    d_hidden[:, -1, :] = np.outer(dyhat, model.head_w)

    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        layer_cache = cache[idx]
        h_size = layer.hidden_size
        wx, wh, _ = layer.fused()
        gi, gf, gg, go = (layer_cache[k] for k in ("i", "f", "g", "o"))
        cells, cell_tanh = layer_cache["c"], layer_cache["tc"]
        inputs = layer_cache["inputs"]

        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros(4 * h_size)
        d_inputs = np.empty_like(inputs)
        dh_next = np.zeros((batch, h_size))
        dc_next = np.zeros((batch, h_size))
        for t in range(steps - 1, -1, -1):
            dh = d_hidden[:, t, :] + dh_next
            tc = cell_tanh[:, t]
            d_o = dh * tc
            dz_o = d_o * go[:, t] * (1.0 - go[:, t])
            dc = dc_next + dh * go[:, t] * (1.0 - tc * tc)
            d_i = dc * gg[:, t]
            dz_i = d_i * gi[:, t] * (1.0 - gi[:, t])
            c_prev = cells[:, t - 1] if t > 0 else np.zeros((batch, h_size))
            d_f = dc * c_prev
            dz_f = d_f * gf[:, t] * (1.0 - gf[:, t])
            d_g = dc * gi[:, t]
            dz_g = d_g * (1.0 - gg[:, t] * gg[:, t])
            dz = np.concatenate([dz_i, dz_f, dz_g, dz_o], axis=1)
            h_prev = layer_cache["h"][:, t - 1] if t > 0 else np.zeros((batch, h_size))
            d_wx += dz.T @ inputs[:, t, :]
            d_wh += dz.T @ h_prev
            d_b += dz.sum(axis=0)
            d_inputs[:, t, :] = dz @ wx
            dh_next = dz @ wh
            dc_next = dc * gf[:, t]

        for gate_idx, gate in enumerate(GATE_NAMES):
            sl = slice(gate_idx * h_size, (gate_idx + 1) * h_size)
            grads[f"layer{idx}.w_{gate}"] = d_wx[sl]
            grads[f"layer{idx}.r_{gate}"] = d_wh[sl]
            grads[f"layer{idx}.b_{gate}"] = d_b[sl]

        if layer_cache["mask"] is not None:
            d_inputs = d_inputs * layer_cache["mask"]
        if idx > 0:
            d_hidden = d_inputs
    return grads


def loss_and_gradients(model: LstmRegressor, windows: np.ndarray, targets: np.ndarray, rng=None):
    """Mean squared error over a batch plus gradients for every parameter.

    Dropout is active when an rng is supplied; pass a freshly seeded
    generator to make the sampled masks reproducible.
    """
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float).ravel()
    if windows.ndim != 3 or windows.shape[0] != targets.shape[0]:
        raise IntegrityError(
            f"batch of {windows.shape} windows does not pair with {targets.shape} targets"
        )
    if len(targets) == 0:
        raise InsufficientDataError("empty batch")
    yhat, cache = _forward_batch(model, windows, training=rng is not None, rng=rng)
    residual = yhat - targets
    with np.errstate(over="ignore"):  # overflow surfaces as the NumericError below
        mse = float(np.mean(residual * residual))
    if not np.isfinite(mse):
        raise NumericError("loss is non-finite")
    dyhat = 2.0 * residual / len(targets)
    grads = _backward_batch(model, cache, dyhat)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name}")
    return mse, grads


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def rmsprop_step(params, grads: dict, state: dict, lr: float, decay: float = 0.9, eps: float = 1e-8):
    """One RMSProp update: s <- decay*s + (1-decay)*g^2, p <- p - lr*g/sqrt(s+eps)."""
    for name, value in params:
        g = grads[name]
        s = state.get(name)
        if s is None:
            s = np.zeros_like(value)
            state[name] = s
        s *= decay
        s += (1.0 - decay) * g * g
        value -= lr * g / np.sqrt(s + eps)
    return params, state


def adam_step(
    params,
    grads: dict,
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One Adam update with bias correction."""
    t = state.get("_t", 0) + 1
    state["_t"] = t
    for name, value in params:
        g = grads[name]
        if name not in state:
            state[name] = {"m": np.zeros_like(value), "v": np.zeros_like(value)}
        m, v = state[name]["m"], state[name]["v"]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs for the windowed regressor."""

    sequence_length: int = 50
    hidden_sizes: tuple = (256, 128, 32)
    dropout_ratios: tuple = (0.2, 0.1)
    learning_rate: float = 0.001
    epochs: int = 30
    batch_size: int = 64
    optimizer: str = "rmsprop"
    seed: int = 0
    grad_clip: float | None = 5.0
    label_cap: float = 130.0

    def validate(self):
        if self.sequence_length < 1:
            raise ConfigError("sequence length must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch size >= 1")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("gradient clip norm must be positive when set")


def train(dataset: WindowedDataset, config: TrainConfig):
    """Mini-batch training with seeded shuffling; returns (model, loss history).

    The history holds one mean squared error per epoch, averaged over all
    samples. epochs=0 returns the freshly initialized model untouched.
    """
    config.validate()
    if len(dataset) == 0:
        raise InsufficientDataError("windowed dataset is empty")
    if dataset.sequence_length != config.sequence_length:
        raise IntegrityError(
            f"dataset windows have length {dataset.sequence_length}, "
            f"config expects {config.sequence_length}"
        )
    model = init_regressor(
        dataset.n_channels,
        config.hidden_sizes,
        config.dropout_ratios,
        seed=config.seed,
        label_cap=config.label_cap,
        sequence_length=config.sequence_length,
    )
    rng = np.random.default_rng(config.seed)
    params = iter_parameters(model)
    state: dict = {}
    step = rmsprop_step if config.optimizer == "rmsprop" else adam_step
    history = []
    n = len(dataset)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        sq_error_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            mse, grads = loss_and_gradients(
                model, dataset.windows[batch_idx], dataset.targets[batch_idx], rng=rng
            )
            if config.grad_clip is not None:
                clip_gradients(grads, config.grad_clip)
            step(params, grads, state, config.learning_rate)
            sq_error_sum += mse * len(batch_idx)
        history.append(sq_error_sum / n)
    return model, history


def predict(model: LstmRegressor, window: np.ndarray, cap: float | None = None) -> float:
    """Inference-mode estimate for one window, clamped to [0, cap]."""
    if cap is None:
        cap = model.label_cap
    yhat, _ = forward(model, window, training=False)
    return float(np.clip(yhat, 0.0, cap))


def save_checkpoint(model: LstmRegressor, path, meta: dict | None = None) -> None:
    """Versioned binary checkpoint: architecture header plus parameter payload."""
    header = {
        "version": 1,
        "input_dim": model.input_dim,
        "hidden_sizes": list(model.hidden_sizes),
        "dropout_ratios": list(model.dropout_ratios),
        "seed": model.seed,
        "label_cap": model.label_cap,
        "sequence_length": model.sequence_length,
        "meta": meta or {},
    }
    payload = {name: value for name, value in iter_parameters(model)}
    payload["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Load (model, meta) from a checkpoint written by save_checkpoint."""
    with np.load(path) as payload:
        header = json.loads(bytes(payload["header"]).decode())
        if header.get("version") != 1:
            raise IntegrityError(f"unsupported checkpoint version {header.get('version')}")
        model = init_regressor(
            header["input_dim"],
            header["hidden_sizes"],
            header["dropout_ratios"],
            seed=header["seed"],
            label_cap=header["label_cap"],
            sequence_length=header.get("sequence_length"),
        )
        for name, value in iter_parameters(model):
            if name not in payload:
                raise IntegrityError(f"checkpoint missing parameter {name}")
            stored = payload[name]
            if stored.shape != value.shape:
                raise IntegrityError(
                    f"checkpoint parameter {name} has shape {stored.shape}, "
                    f"expected {value.shape}"
                )
            value[...] = stored
    return model, header["meta"]
