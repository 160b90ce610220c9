"""Minimal neural layers with exact analytic gradients, in float64 numpy.

Covers exactly what the ranking and classification heads need: temporal
convolution (kernel 5, stride 1, valid), ReLU, temporal average pooling
(size 3, stride 1), fully connected layers, softmax + cross-entropy,
momentum SGD with weight decay, finite-difference gradient checking, and a
binary checkpoint format.

Layer classes run on batched tensors of shape (B, time, channels) or
(B, features) and cache the forward pass for backward. The module-level
``*_forward`` functions are single-sample conveniences over the same math.

Checkpoint layout (all integers little-endian u32, values little-endian
float64):

    magic "TCNW" | version=1 | array count
    per array: name length | name utf-8 | ndim | dims... | values

Round-trips are bit-exact.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import BadMagic, ShapeError, StateError, TruncatedFile

CHECKPOINT_MAGIC = b"TCNW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


class Param:
    """A trainable array plus its gradient and momentum-velocity buffers.

    ``decay`` marks whether weight decay applies; biases opt out.
    """

    def __init__(self, name: str, value: np.ndarray, decay: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)
        self.decay = decay


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def zero_grads(params):
    for p in params:
        p.grad[...] = 0.0


def sgd_step(params, cfg: OptimizerConfig):
    """v <- momentum*v + (grad + weight_decay*w); w <- w - learning_rate*v."""
    for p in params:
        if p.grad.shape != p.value.shape:
            raise ShapeError(f"grad shape {p.grad.shape} != value shape {p.value.shape} for {p.name}")
        g = p.grad + cfg.weight_decay * p.value if p.decay else p.grad
        p.velocity *= cfg.momentum
        p.velocity += g
        p.value -= cfg.learning_rate * p.velocity


# ---------------------------------------------------------------------------
# batched layer math
# ---------------------------------------------------------------------------


def _time_windows(x: np.ndarray, size: int) -> np.ndarray:
    # (B, n, C) -> (B, n-size+1, C, size) without copying
    return np.lib.stride_tricks.sliding_window_view(x, size, axis=1)


class TemporalConv:
    """Valid 1-D convolution over time: (B, n, c_in) -> (B, n-k+1, c_out)."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 5, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = kernel
        self.weight = Param(
            "conv.weight",
            glorot_uniform((c_out, c_in, kernel), fan_in=c_in * kernel, fan_out=c_out * kernel, rng=rng),
        )
        self.bias = Param("conv.bias", np.zeros(c_out), decay=False)
        # forward inputs are stacked so a layer shared between branches can
        # replay them LIFO during backward
        self._cache = []

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.weight.value.shape[1]:
            raise ShapeError(f"expected (B, n, {self.weight.value.shape[1]}), got {x.shape}")
        if x.shape[1] < self.kernel:
            raise ShapeError(f"time axis {x.shape[1]} shorter than kernel {self.kernel}")
        windows = _time_windows(x, self.kernel)
        out = np.einsum("btck,ock->bto", windows, self.weight.value, optimize=True)
        out += self.bias.value
        self._cache.append(x)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        x = self._cache.pop()
        windows = _time_windows(x, self.kernel)
        self.weight.grad += np.einsum("bto,btck->ock", grad_out, windows, optimize=True)
        self.bias.grad += grad_out.sum(axis=(0, 1))
        # full correlation of upstream grad with the time-flipped kernel
        pad = self.kernel - 1
        gp = np.pad(grad_out, ((0, 0), (pad, pad), (0, 0)))
        gwin = _time_windows(gp, self.kernel)  # (B, n, c_out, k)
        return np.einsum("btok,ock->btc", gwin, self.weight.value[:, :, ::-1], optimize=True)


class ReLU:
    def __init__(self):
        self._cache = []

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self._cache.append(mask)
        return np.where(mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        return np.where(self._cache.pop(), grad_out, 0.0)


class AvgPool:
    """Temporal mean over sliding windows: (B, n, C) -> (B, n-size+1, C)."""

    def __init__(self, size: int = 3):
        self.size = size
        self._cache = []

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] < self.size:
            raise ShapeError(f"time axis {x.shape[1]} shorter than pool size {self.size}")
        self._cache.append(x.shape[1])
        return _time_windows(x, self.size).mean(axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        self._cache.pop()
        pad = self.size - 1
        gp = np.pad(grad_out, ((0, 0), (pad, pad), (0, 0)))
        return _time_windows(gp, self.size).sum(axis=3) / self.size


class Flatten:
    """(B, n, C) -> (B, n*C), row-major."""

    def __init__(self):
        self._cache = []

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache.append(x.shape)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        return grad_out.reshape(self._cache.pop())


class Linear:
    """Affine map: (B, d_in) -> (B, d_out)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Param("fc.weight", glorot_uniform((d_out, d_in), fan_in=d_in, fan_out=d_out, rng=rng))
        self.bias = Param("fc.bias", np.zeros(d_out), decay=False)
        self._cache = []

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.weight.value.shape[1]:
            raise ShapeError(f"expected (B, {self.weight.value.shape[1]}), got {x.shape}")
        self._cache.append(x)
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        x = self._cache.pop()
        self.weight.grad += grad_out.T @ x
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value


class SoftmaxCrossEntropy:
    """Mean cross-entropy over a batch of logits; backward yields dloss/dlogits."""

    def __init__(self):
        self._cache = []

    def forward(self, logits: np.ndarray, labels: np.ndarray):
        probs = softmax(logits)
        batch = np.arange(logits.shape[0])
        losses = -np.log(probs[batch, labels])
        self._cache.append((probs, labels))
        return float(losses.mean()), probs

    def backward(self) -> np.ndarray:
        if not self._cache:
            raise StateError("backward called before forward")
        probs, labels = self._cache.pop()
        grad = probs.copy()
        grad[np.arange(len(labels)), labels] -= 1.0
        grad /= len(labels)
        return grad


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# single-sample functional forms
# ---------------------------------------------------------------------------


def temporal_conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Convolve (n, c_in) with weight (c_out, c_in, k): out[t, o] = b[o] + sum w*x."""
    x = np.asarray(x, dtype=np.float64)
    kernel = weight.shape[2]
    if x.ndim != 2 or x.shape[0] < kernel:
        raise ShapeError(f"input must be (n >= {kernel}, c_in), got {x.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=0)
    return np.einsum("tck,ock->to", windows, weight) + bias


def avg_pool_forward(x: np.ndarray, size: int = 3) -> np.ndarray:
    """Mean over sliding time windows: (n, c) -> (n - size + 1, c)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < size:
        raise ShapeError(f"input must be (n >= {size}, c), got {x.shape}")
    return np.lib.stride_tricks.sliding_window_view(x, size, axis=0).mean(axis=2)


def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (weight.shape[1],):
        raise ShapeError(f"expected input shape ({weight.shape[1]},), got {x.shape}")
    return weight @ x + bias


def softmax_xent(logits: np.ndarray, label: int):
    """Loss and probabilities for a single logit vector."""
    probs = softmax(np.asarray(logits, dtype=np.float64))
    return float(-np.log(probs[label])), probs


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def finite_difference_gradient(loss_fn, array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array``, in place.

    ``loss_fn`` must recompute the forward pass reading the current contents
    of ``array``; entries are perturbed one at a time and restored.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn()
        flat[i] = orig - eps
        down = loss_fn()
        flat[i] = orig
        flat_grad[i] = (up - down) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max |a - n| / max(|a| + |n|, floor); the floor keeps near-zero entries sane."""
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, named_arrays):
    """Write an ordered mapping of name -> float64 array to ``path``."""
    items = list(named_arrays.items()) if isinstance(named_arrays, dict) else list(named_arrays)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(items)))
        for name, value in items:
            raw = name.encode("utf-8")
            value = np.ascontiguousarray(value, dtype="<f8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(value.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into an ordered name -> float64 array dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: expected magic {CHECKPOINT_MAGIC!r}, got {data[:4]!r}")
    offset = 4

    def take(count):
        nonlocal offset
        if offset + count > len(data):
            raise TruncatedFile(f"{path}: needed {count} bytes at offset {offset}, file has {len(data)}")
        chunk = data[offset : offset + count]
        offset += count
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise BadMagic(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        values = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        out[name] = values.astype(np.float64)
    return out


def save_params(path, params):
    save_checkpoint(path, [(p.name, p.value) for p in params])


def load_params(path, params):
    """Load a checkpoint into existing Params; names and shapes must match."""
    stored = load_checkpoint(path)
    names = [p.name for p in params]
    if names != list(stored.keys()):
        raise ShapeError(f"{path}: parameter names {list(stored.keys())} != expected {names}")
    for p in params:
        if stored[p.name].shape != p.value.shape:
            raise ShapeError(f"{path}: {p.name} has shape {stored[p.name].shape}, expected {p.value.shape}")
        p.value[...] = stored[p.name]
