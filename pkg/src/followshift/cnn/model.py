"""From-scratch convolutional gender classifier: parameters, forward, backward.

Architecture (batch layout N x C x H x W, double precision):

    3x28x28 -> conv 5x5 valid (32 ch) -> ReLU -> 32x24x24
            -> max-pool 2x2/2          -> 32x12x12
            -> conv 5x5 valid (64 ch) -> ReLU -> 64x8x8
            -> max-pool 2x2/2          -> 64x4x4
            -> flatten (1024)          -> affine -> 2 logits

Convolution means valid cross-correlation (no kernel flip). Max-pool and
argmax ties resolve to the first index so training is bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError
from ..weaklabel import WeakLabel

IN_CHANNELS = 3
INPUT_SIDE = 28
CONV1_CHANNELS = 32
CONV2_CHANNELS = 64
KERNEL_SIZE = 5
POOL_SIZE = 2
NUM_CLASSES = 2
FEATURE_DIM = CONV2_CHANNELS * 4 * 4  # 1024 after the second pool

# class index convention used everywhere: 0 = male, 1 = female
CLASS_LABELS = (WeakLabel.MALE, WeakLabel.FEMALE)
LABEL_TO_CLASS = {WeakLabel.MALE: 0, WeakLabel.FEMALE: 1}

PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")


class ShapeError(DataError):
    """An array does not have the shape an operation requires."""


@dataclass(frozen=True)
class Architecture:
    """Structural descriptor stored alongside the weights."""

    input_channels: int = IN_CHANNELS
    input_side: int = INPUT_SIDE
    conv_channels: tuple[int, int] = (CONV1_CHANNELS, CONV2_CHANNELS)
    kernel_size: int = KERNEL_SIZE
    pool_size: int = POOL_SIZE
    num_classes: int = NUM_CLASSES
    activation: str = "relu"
    padding: str = "valid"

    def __post_init__(self):
        if self.activation != "relu" or self.padding != "valid":
            raise DataError("only relu activation with valid padding is supported")
        side = self.input_side
        for _ in self.conv_channels:
            side = side - (self.kernel_size - 1)
            if side < 1 or side % self.pool_size != 0:
                raise DataError(f"layer chain does not fit input side {self.input_side}")
            side //= self.pool_size

    @property
    def feature_dim(self) -> int:
        side = self.input_side
        for _ in self.conv_channels:
            side = (side - (self.kernel_size - 1)) // self.pool_size
        return self.conv_channels[-1] * side * side

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "input_side": self.input_side,
            "conv_channels": list(self.conv_channels),
            "kernel_size": self.kernel_size,
            "pool_size": self.pool_size,
            "num_classes": self.num_classes,
            "activation": self.activation,
            "padding": self.padding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            input_channels=int(d["input_channels"]),
            input_side=int(d["input_side"]),
            conv_channels=tuple(int(c) for c in d["conv_channels"]),
            kernel_size=int(d["kernel_size"]),
            pool_size=int(d["pool_size"]),
            num_classes=int(d["num_classes"]),
            activation=str(d["activation"]),
            padding=str(d["padding"]),
        )


def _expect(arr: np.ndarray, shape: tuple, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != shape:
        raise ShapeError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError(f"{what}: contains non-finite values")
    return arr


@dataclass
class CnnModel:
    """All trainable parameters plus the architecture descriptor."""

    conv1_w: np.ndarray  # (32, 3, 5, 5)
    conv1_b: np.ndarray  # (32,)
    conv2_w: np.ndarray  # (64, 32, 5, 5)
    conv2_b: np.ndarray  # (64,)
    fc_w: np.ndarray  # (2, 1024)
    fc_b: np.ndarray  # (2,)
    arch: Architecture = field(default_factory=Architecture)

    def __post_init__(self):
        k = self.arch.kernel_size
        c1, c2 = self.arch.conv_channels
        self.conv1_w = _expect(
            self.conv1_w, (c1, self.arch.input_channels, k, k), "conv1_w"
        )
        self.conv1_b = _expect(self.conv1_b, (c1,), "conv1_b")
        self.conv2_w = _expect(self.conv2_w, (c2, c1, k, k), "conv2_w")
        self.conv2_b = _expect(self.conv2_b, (c2,), "conv2_b")
        self.fc_w = _expect(
            self.fc_w, (self.arch.num_classes, self.arch.feature_dim), "fc_w"
        )
        self.fc_b = _expect(self.fc_b, (self.arch.num_classes,), "fc_b")

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_ORDER:
            yield name, getattr(self, name)

    @property
    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def copy(self) -> "CnnModel":
        return CnnModel(
            conv1_w=self.conv1_w.copy(),
            conv1_b=self.conv1_b.copy(),
            conv2_w=self.conv2_w.copy(),
            conv2_b=self.conv2_b.copy(),
            fc_w=self.fc_w.copy(),
            fc_b=self.fc_b.copy(),
            arch=self.arch,
        )


@dataclass
class Gradients:
    """Loss gradients, one array per parameter tensor (same shapes)."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_ORDER:
            yield name, getattr(self, name)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_model(
    seed_or_rng: Union[int, np.random.Generator], arch: Architecture = Architecture()
) -> CnnModel:
    """Seeded uniform(-r, r) weight init with r = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    k = arch.kernel_size
    c_in = arch.input_channels
    c1, c2 = arch.conv_channels

    r1 = glorot_limit(c_in * k * k, c1 * k * k)
    r2 = glorot_limit(c1 * k * k, c2 * k * k)
    r3 = glorot_limit(arch.feature_dim, arch.num_classes)
    return CnnModel(
        conv1_w=rng.uniform(-r1, r1, size=(c1, c_in, k, k)),
        conv1_b=np.zeros(c1),
        conv2_w=rng.uniform(-r2, r2, size=(c2, c1, k, k)),
        conv2_b=np.zeros(c2),
        fc_w=rng.uniform(-r3, r3, size=(arch.num_classes, arch.feature_dim)),
        fc_b=np.zeros(arch.num_classes),
        arch=arch,
    )


def conv2d_valid(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation: (N,C,H,W) x (O,C,k,k) -> (N,O,H-k+1,W-k+1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != weights.shape[1]:
        raise ShapeError(
            f"conv input {x.shape} incompatible with kernels {weights.shape}"
        )
    k = weights.shape[2]
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"conv input {x.shape} smaller than kernel {k}x{k}")
    windows = sliding_window_view(x, (k, k), axis=(2, 3))  # (N,C,H',W',k,k)
    out = np.tensordot(windows, weights, axes=([1, 4, 5], [1, 2, 3]))  # (N,H',W',O)
    out = out.transpose(0, 3, 1, 2)
    return out + bias[None, :, None, None]


def conv2d_valid_backward(
    x: np.ndarray, weights: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a valid cross-correlation: returns (d_x, d_weights, d_bias)."""
    k = weights.shape[2]
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    d_bias = d_out.sum(axis=(0, 2, 3))
    # d_w[o,c,i,j] = sum_{n,y,x} window[n,c,y,x,i,j] * d_out[n,o,y,x]
    d_weights = np.tensordot(d_out, windows, axes=([0, 2, 3], [0, 2, 3]))
    # full correlation of d_out with 180-degree-rotated kernels
    pad = k - 1
    d_pad = np.pad(d_out, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    d_windows = sliding_window_view(d_pad, (k, k), axis=(2, 3))
    w_flip = weights[:, :, ::-1, ::-1]
    d_x = np.tensordot(d_windows, w_flip, axes=([1, 4, 5], [0, 2, 3]))
    return d_x.transpose(0, 3, 1, 2), d_weights, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 2x2 max-pool; returns (pooled, argmax) for backprop.

    The argmax is the flat index within each window, first index on ties.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pool input spatial dims must be even, got {h}x{w}")
    tiles = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = tiles.argmax(axis=-1)
    pooled = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return pooled, idx


def maxpool2x2_backward(
    d_pooled: np.ndarray, idx: np.ndarray, in_shape: tuple
) -> np.ndarray:
    """Route pooled gradients back to each window's argmax element."""
    n, c, h, w = in_shape
    tiles = np.zeros((n, c, h // 2, w // 2, 4), dtype=np.float64)
    np.put_along_axis(tiles, idx[..., None], d_pooled[..., None], axis=-1)
    return (
        tiles.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


@dataclass
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    p1: np.ndarray
    idx1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    p2: np.ndarray
    idx2: np.ndarray
    features: np.ndarray
    logits: np.ndarray


def _check_batch(model: CnnModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    want = (model.arch.input_channels, model.arch.input_side, model.arch.input_side)
    if batch.ndim != 4 or batch.shape[1:] != want:
        raise ShapeError(f"batch must be (N, {want[0]}, {want[1]}, {want[2]}), got {batch.shape}")
    return batch


def forward_cached(model: CnnModel, batch: np.ndarray) -> ForwardCache:
    x = _check_batch(model, batch)
    z1 = conv2d_valid(x, model.conv1_w, model.conv1_b)
    a1 = relu(z1)
    p1, idx1 = maxpool2x2(a1)
    z2 = conv2d_valid(p1, model.conv2_w, model.conv2_b)
    a2 = relu(z2)
    p2, idx2 = maxpool2x2(a2)
    features = p2.reshape(p2.shape[0], -1)
    logits = features @ model.fc_w.T + model.fc_b
    return ForwardCache(x, z1, a1, p1, idx1, z2, a2, p2, idx2, features, logits)


def forward(model: CnnModel, batch: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; returns logits of shape (N, 2)."""
    return forward_cached(model, batch).logits


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"labels shape {labels.shape} does not match batch of {logits.shape[0]}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise DataError("labels must be class indices in {0, 1}")
    return labels.astype(np.intp)


def loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy, stabilized with log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-d, got shape {logits.shape}")
    labels = _check_labels(logits, labels)
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    picked = logits[np.arange(logits.shape[0]), labels]
    return float(np.mean(lse - picked))


def loss_gradient_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = _check_labels(logits, labels)
    n = logits.shape[0]
    g = softmax(logits)
    g[np.arange(n), labels] -= 1.0
    return g / n


def backward(model: CnnModel, batch: np.ndarray, labels: np.ndarray) -> Gradients:
    """Exact analytic gradients of the mean cross-entropy over the batch."""
    return loss_and_gradients(model, batch, labels)[1]


def loss_and_gradients(
    model: CnnModel, batch: np.ndarray, labels: np.ndarray
) -> tuple[float, Gradients]:
    """Batch loss and its gradients from a single forward pass."""
    cache = forward_cached(model, batch)
    batch_loss = loss(cache.logits, labels)
    d_logits = loss_gradient_logits(cache.logits, labels)

    d_fc_w = d_logits.T @ cache.features
    d_fc_b = d_logits.sum(axis=0)
    d_features = d_logits @ model.fc_w

    d_p2 = d_features.reshape(cache.p2.shape)
    d_a2 = maxpool2x2_backward(d_p2, cache.idx2, cache.a2.shape)
    d_z2 = d_a2 * (cache.z2 > 0.0)
    d_p1, d_conv2_w, d_conv2_b = conv2d_valid_backward(cache.p1, model.conv2_w, d_z2)

    d_a1 = maxpool2x2_backward(d_p1, cache.idx1, cache.a1.shape)
    d_z1 = d_a1 * (cache.z1 > 0.0)
    _, d_conv1_w, d_conv1_b = conv2d_valid_backward(cache.x, model.conv1_w, d_z1)

    grads = Gradients(
        conv1_w=d_conv1_w,
        conv1_b=d_conv1_b,
        conv2_w=d_conv2_w,
        conv2_b=d_conv2_b,
        fc_w=d_fc_w,
        fc_b=d_fc_b,
    )
    return batch_loss, grads


def predict_batch(model: CnnModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax classes and their softmax probabilities for a batch.

    Exactly tied logits resolve to class 0 with probability 0.5.
    """
    probs = softmax(forward(model, batch))
    classes = probs.argmax(axis=1)
    return classes, probs[np.arange(probs.shape[0]), classes]


def predict(model: CnnModel, face) -> tuple[WeakLabel, float]:
    """Classify one face tensor (FaceTensor or bare (3,28,28) array)."""
    if isinstance(face, np.ndarray):
        data = np.asarray(face, dtype=np.float64)
    else:
        data = face.data
    classes, probs = predict_batch(model, data[None, ...])
    return CLASS_LABELS[int(classes[0])], float(probs[0])
