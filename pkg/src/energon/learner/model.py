"""1-D CNN predictor: three conv/batch-norm/ReLU blocks, two max-pools, two dense layers.

All arithmetic is float64 numpy; convolutions run through the compiled
kernels in :mod:`energon.learner.kernels`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .kernels import conv1d_backward, conv1d_forward

LOG_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class CnnSpec:
    n_classes: int
    conv_filters: tuple[int, ...] = (32, 16, 8)
    kernel_size: int = 9
    pool_after: tuple[bool, ...] = (True, True, False)
    fc_hidden: int = 64
    input_channels: int = 2
    input_length: int = 840
    pool_size: int = 2
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(f) for f in self.conv_filters))
        object.__setattr__(self, "pool_after", tuple(bool(p) for p in self.pool_after))
        if self.n_classes < 1:
            raise ShapeError("n_classes must be positive")
        if len(self.pool_after) != len(self.conv_filters):
            raise ShapeError("pool_after needs one flag per conv layer")
        if min(self.conv_filters, default=1) < 1 or self.fc_hidden < 1 or self.kernel_size < 1:
            raise ShapeError("layer widths and kernel size must be positive")
        self.layer_lengths()

    def layer_lengths(self) -> list[tuple[int, int]]:
        """(conv output length, block output length) per conv layer."""
        out, length = [], self.input_length
        for i, pool in enumerate(self.pool_after):
            conv_len = length - self.kernel_size + 1
            block_len = conv_len // self.pool_size if pool else conv_len
            if conv_len < 1 or block_len < 1:
                raise ShapeError(f"input length {self.input_length} collapses at conv layer {i + 1}")
            out.append((conv_len, block_len))
            length = block_len
        return out

    @property
    def flat_dim(self) -> int:
        return self.conv_filters[-1] * self.layer_lengths()[-1][1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_filters"] = list(self.conv_filters)
        d["pool_after"] = list(self.pool_after)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CnnSpec":
        d = dict(d)
        d["conv_filters"] = tuple(d["conv_filters"])
        d["pool_after"] = tuple(d["pool_after"])
        return cls(**d)


def parameter_shapes(spec: CnnSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Trainable parameters and batch-norm buffers in declaration order."""
    shapes, c_in = [], spec.input_channels
    for i, f in enumerate(spec.conv_filters, start=1):
        shapes += [
            (f"conv{i}.weight", (f, c_in, spec.kernel_size)),
            (f"conv{i}.bias", (f,)),
            (f"bn{i}.gamma", (f,)),
            (f"bn{i}.beta", (f,)),
            (f"bn{i}.running_mean", (f,)),
            (f"bn{i}.running_var", (f,)),
        ]
        c_in = f
    shapes += [
        ("fc1.weight", (spec.fc_hidden, spec.flat_dim)),
        ("fc1.bias", (spec.fc_hidden,)),
        ("fc2.weight", (spec.n_classes, spec.fc_hidden)),
        ("fc2.bias", (spec.n_classes,)),
    ]
    return shapes


def _is_buffer(name: str) -> bool:
    return name.endswith((".running_mean", ".running_var"))


class CnnModel:
    def __init__(self, spec: CnnSpec, params: dict, buffers: dict, training: bool = False):
        self.spec = spec
        self.params = params
        self.buffers = buffers
        self.training = training
        for name, shape in parameter_shapes(spec):
            store = buffers if _is_buffer(name) else params
            if name not in store or store[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}")
        if any(np.any(v <= 0) for k, v in buffers.items() if k.endswith("running_var")):
            raise ValueError("running variances must be positive")

    @classmethod
    def initialize(cls, spec: CnnSpec, seed: int = 0) -> "CnnModel":
        """He-uniform weights, zero biases, identity batch-norm."""
        rng = np.random.default_rng(seed)
        params, buffers = {}, {}
        for name, shape in parameter_shapes(spec):
            if name.endswith(".weight"):
                fan_in = int(np.prod(shape[1:]))
                limit = np.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-limit, limit, size=shape)
            elif name.endswith(".gamma"):
                params[name] = np.ones(shape)
            elif name.endswith(".running_var"):
                buffers[name] = np.ones(shape)
            elif name.endswith(".running_mean"):
                buffers[name] = np.zeros(shape)
            else:
                params[name] = np.zeros(shape)
        return cls(spec, params, buffers)

    def copy(self) -> "CnnModel":
        return CnnModel(self.spec, {k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.buffers.items()}, self.training)

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [(name, (self.buffers if _is_buffer(name) else self.params)[name])
                for name, _ in parameter_shapes(self.spec)]

    def train(self) -> "CnnModel":
        self.training = True
        return self

    def eval(self) -> "CnnModel":
        self.training = False
        return self

    def logits(self, batch) -> np.ndarray:
        out, _ = _forward(self, as_batch(batch, self.spec), self.training)
        return out

    def forward(self, batch) -> np.ndarray:
        return softmax(self.logits(batch))

    __call__ = forward

    def predict(self, batch) -> np.ndarray:
        return np.argmax(self.forward(batch), axis=1)


def as_batch(batch, spec: CnnSpec) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([getattr(f, "values", f) for f in batch])
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (spec.input_channels, spec.input_length):
        raise ShapeError(f"expected batch of shape (n, {spec.input_channels}, {spec.input_length}), "
                         f"got {x.shape}")
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: CnnModel, batch) -> np.ndarray:
    """Class probabilities, one row per input."""
    return model.forward(batch)


def _maxpool(a, size):
    n, c, length = a.shape
    out_len = length // size
    win = a[:, :, :out_len * size].reshape(n, c, out_len, size)
    arg = win.argmax(axis=3)
    return np.take_along_axis(win, arg[..., None], axis=3)[..., 0], arg


def _unpool(dp, arg, length, size):
    n, c, out_len = dp.shape
    win = np.zeros((n, c, out_len, size))
    np.put_along_axis(win, arg[..., None], dp[..., None], axis=3)
    da = np.zeros((n, c, length))
    da[:, :, :out_len * size] = win.reshape(n, c, out_len * size)
    return da


def _forward(model: CnnModel, x: np.ndarray, train: bool):
    spec, p, buf = model.spec, model.params, model.buffers
    caches, h = [], x
    for i, pool in enumerate(spec.pool_after, start=1):
        z = conv1d_forward(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"])
        if train:
            mu, var = z.mean(axis=(0, 2)), z.var(axis=(0, 2))
        else:
            mu, var = buf[f"bn{i}.running_mean"], buf[f"bn{i}.running_var"]
        inv = 1.0 / np.sqrt(var + spec.bn_eps)
        zhat = (z - mu[None, :, None]) * inv[None, :, None]
        y = p[f"bn{i}.gamma"][None, :, None] * zhat + p[f"bn{i}.beta"][None, :, None]
        a = np.maximum(y, 0.0)
        arg = None
        if pool:
            a, arg = _maxpool(a, spec.pool_size)
        caches.append((h, zhat, inv, y > 0, arg, z.shape[2], mu, var))
        h = a
    flat = h.reshape(len(x), -1)
    f1 = flat @ p["fc1.weight"].T + p["fc1.bias"]
    r1 = np.maximum(f1, 0.0)
    logits = r1 @ p["fc2.weight"].T + p["fc2.bias"]
    return logits, (caches, h.shape, flat, f1, r1, train)


def activation_pattern(model: CnnModel, batch) -> list[np.ndarray]:
    """ReLU masks and pooling winners; the loss is smooth wherever this is constant."""
    _, (caches, _, _, f1, _, _) = _forward(model, as_batch(batch, model.spec), model.training)
    out = [c[3] for c in caches] + [c[4] for c in caches if c[4] is not None]
    return out + [f1 > 0]


def cross_entropy(probs: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    py = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(py, LOG_CLAMP))))


def _backward(model: CnnModel, dlogits: np.ndarray, cache) -> dict:
    spec, p = model.spec, model.params
    caches, block_shape, flat, f1, r1, train = cache
    g = {}
    g["fc2.weight"] = dlogits.T @ r1
    g["fc2.bias"] = dlogits.sum(axis=0)
    df1 = (dlogits @ p["fc2.weight"]) * (f1 > 0)
    g["fc1.weight"] = df1.T @ flat
    g["fc1.bias"] = df1.sum(axis=0)
    dh = (df1 @ p["fc1.weight"]).reshape(block_shape)
    for i in range(len(caches), 0, -1):
        h, zhat, inv, mask, arg, conv_len, _, _ = caches[i - 1]
        da = _unpool(dh, arg, conv_len, spec.pool_size) if arg is not None else dh
        dy = da * mask
        g[f"bn{i}.gamma"] = (dy * zhat).sum(axis=(0, 2))
        g[f"bn{i}.beta"] = dy.sum(axis=(0, 2))
        dzhat = dy * p[f"bn{i}.gamma"][None, :, None]
        if train:
            m = dzhat.shape[0] * dzhat.shape[2]
            dz = (inv[None, :, None] / m) * (
                m * dzhat
                - dzhat.sum(axis=(0, 2))[None, :, None]
                - zhat * (dzhat * zhat).sum(axis=(0, 2))[None, :, None]
            )
        else:
            dz = dzhat * inv[None, :, None]
        dh, g[f"conv{i}.weight"], g[f"conv{i}.bias"] = conv1d_backward(
            np.ascontiguousarray(dz), h, p[f"conv{i}.weight"])
    return g


def loss_and_gradients_with_stats(model: CnnModel, batch, labels):
    x = as_batch(batch, model.spec)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (len(x),) or labels.min() < 0 or labels.max() >= model.spec.n_classes:
        raise ShapeError("labels must be one in-range class index per input")
    logits, cache = _forward(model, x, model.training)
    probs = softmax(logits)
    rows = np.arange(len(labels))
    py = probs[rows, labels]
    loss = float(-np.mean(np.log(np.maximum(py, LOG_CLAMP))))
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits[py < LOG_CLAMP] = 0.0  # clamped rows contribute a constant
    dlogits /= len(labels)
    grads = _backward(model, dlogits, cache)
    stats = [(c[6], c[7], c[1].shape[0] * c[1].shape[2]) for c in cache[0]]
    return loss, grads, stats


def loss_and_gradients(model: CnnModel, batch, labels) -> tuple[float, dict]:
    """Mean cross-entropy over the batch and its gradient for every parameter.

    Uses batch statistics when the model is in training mode.
    """
    loss, grads, _ = loss_and_gradients_with_stats(model, batch, labels)
    return loss, grads


def update_running_stats(model: CnnModel, stats) -> None:
    m = model.spec.bn_momentum
    for i, (mu, var, count) in enumerate(stats, start=1):
        unbiased = var * count / max(count - 1, 1)
        rm, rv = model.buffers[f"bn{i}.running_mean"], model.buffers[f"bn{i}.running_var"]
        rm *= 1.0 - m
        rm += m * mu
        rv *= 1.0 - m
        rv += m * unbiased
