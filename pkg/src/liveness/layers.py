"""Neural layers with explicit forward and backward passes.

All values are plain numpy arrays: float32 for training and inference,
float64 when a caller wants extra precision for gradient checking. Each
layer caches what its backward pass needs; calling backward without a
preceding forward raises StateError. Every forward/backward output is
checked for NaN/Inf and raises NumericError naming the offending layer.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError, StateError

TRAIN = "train"
INFER = "infer"


def _require_finite(name: str, label: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{name}: non-finite values in {label}")


class Layer:
    """Base layer: named, optionally holding parameters and gradients."""

    def __init__(self, name: str = ""):
        self.name = name or type(self).__name__

    def forward(self, x: np.ndarray, mode: str = INFER, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def trainable(self):
        """Yield (param_name, param, grad) triples. Grad is None before backward."""
        return iter(())

    def state_tensors(self):
        """Yield (tensor_name, array) for every persistent tensor (params + buffers)."""
        for key, param, _ in self.trainable():
            yield key, param

    def _no_cache(self):
        raise StateError(f"{self.name}: backward called without a preceding forward")


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    Weight shape [out_channels, in_channels, 3, 3], bias [out_channels].
    Forward runs as an im2col matrix product; the column matrix is cached
    for the backward pass.
    """

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 name: str = "", dtype=np.float32):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        fan_in = in_channels * 9
        std = np.sqrt(2.0 / fan_in)
        self.weight = (rng.standard_normal((out_channels, in_channels, 3, 3)) * std).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._cols = None
        self._in_shape = None

    def trainable(self):
        yield "weight", self.weight, self.grad_weight
        yield "bias", self.bias, self.grad_bias

    def forward(self, x, mode=INFER, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected NCHW input, got shape {x.shape}")
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(
                f"{self.name}: expected {self.in_channels} input channels, got {c}")
        padded = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
        padded[:, :, 1:h + 1, 1:w + 1] = x
        cols = np.empty((n, h, w, c, 9), dtype=x.dtype)
        for dy in range(3):
            for dx in range(3):
                cols[..., dy * 3 + dx] = padded[:, :, dy:dy + h, dx:dx + w].transpose(0, 2, 3, 1)
        cols = cols.reshape(n * h * w, c * 9)
        wmat = self.weight.reshape(self.out_channels, c * 9)
        out = cols @ wmat.T.astype(x.dtype, copy=False) + self.bias.astype(x.dtype, copy=False)
        out = np.ascontiguousarray(
            out.reshape(n, h, w, self.out_channels).transpose(0, 3, 1, 2))
        _require_finite(self.name, "forward output", out)
        self._cols = cols
        self._in_shape = (n, c, h, w)
        return out

    def backward(self, grad_out):
        if self._cols is None:
            self._no_cache()
        n, c, h, w = self._in_shape
        if grad_out.shape != (n, self.out_channels, h, w):
            raise ShapeError(
                f"{self.name}: grad_out shape {grad_out.shape} does not match forward output")
        g2 = grad_out.transpose(0, 2, 3, 1).reshape(n * h * w, self.out_channels)
        self.grad_bias = g2.sum(axis=0)
        self.grad_weight = (g2.T @ self._cols).reshape(self.weight.shape)
        wmat = self.weight.reshape(self.out_channels, c * 9).astype(grad_out.dtype, copy=False)
        grad_cols = (g2 @ wmat).reshape(n, h, w, c, 9)
        grad_padded = np.zeros((n, c, h + 2, w + 2), dtype=grad_out.dtype)
        for dy in range(3):
            for dx in range(3):
                grad_padded[:, :, dy:dy + h, dx:dx + w] += \
                    grad_cols[..., dy * 3 + dx].transpose(0, 3, 1, 2)
        grad_in = grad_padded[:, :, 1:h + 1, 1:w + 1]
        _require_finite(self.name, "backward output", grad_in)
        self._cols = None
        self._in_shape = None
        return grad_in


class BatchNorm(Layer):
    """Per-channel batch normalization for NC or NCHW inputs.

    Train mode normalizes with batch statistics (population variance) and
    updates running stats with the configured momentum. Infer mode uses
    running stats only and is a pure function of its input.
    """

    def __init__(self, channels: int, epsilon: float = 1e-5, momentum: float = 0.9,
                 name: str = "", dtype=np.float32):
        super().__init__(name)
        self.channels = channels
        self.epsilon = epsilon
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.grad_gamma = None
        self.grad_beta = None
        self._cache = None

    def trainable(self):
        yield "gamma", self.gamma, self.grad_gamma
        yield "beta", self.beta, self.grad_beta

    def state_tensors(self):
        yield "gamma", self.gamma
        yield "beta", self.beta
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var

    def _axes_and_view(self, x):
        if x.ndim == 2:
            return (0,), (1, self.channels)
        if x.ndim == 4:
            return (0, 2, 3), (1, self.channels, 1, 1)
        raise ShapeError(f"{self.name}: expected NC or NCHW input, got shape {x.shape}")

    def forward(self, x, mode=INFER, rng=None):
        axes, view = self._axes_and_view(x)
        if x.shape[1] != self.channels:
            raise ShapeError(
                f"{self.name}: expected {self.channels} channels, got {x.shape[1]}")
        if mode == TRAIN:
            count = x.size // self.channels
            if count < 2:
                raise ShapeError(
                    f"{self.name}: train mode needs >= 2 values per channel, got {count}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            inv = 1.0 / np.sqrt(var + np.asarray(self.epsilon, dtype=x.dtype))
            xhat = (x - mean.reshape(view)) * inv.reshape(view)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1.0 - m) * mean
            self.running_var[...] = m * self.running_var + (1.0 - m) * var
            self._cache = (xhat, inv, count, view, axes)
        else:
            inv = 1.0 / np.sqrt(self.running_var.astype(x.dtype) + x.dtype.type(self.epsilon))
            xhat = (x - self.running_mean.astype(x.dtype).reshape(view)) * inv.reshape(view)
            self._cache = None
        out = self.gamma.astype(x.dtype).reshape(view) * xhat \
            + self.beta.astype(x.dtype).reshape(view)
        _require_finite(self.name, "forward output", out)
        return out

    def backward(self, grad_out):
        if self._cache is None:
            self._no_cache()
        xhat, inv, count, view, axes = self._cache
        self.grad_gamma = (grad_out * xhat).sum(axis=axes)
        self.grad_beta = grad_out.sum(axis=axes)
        dxhat = grad_out * self.gamma.astype(grad_out.dtype).reshape(view)
        grad_in = (inv.reshape(view) / count) * (
            count * dxhat
            - dxhat.sum(axis=axes).reshape(view)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(view))
        _require_finite(self.name, "backward output", grad_in)
        self._cache = None
        return grad_in


class ReLU(Layer):
    """max(x, 0); gradient at exactly 0 is defined as 0."""

    def __init__(self, name: str = ""):
        super().__init__(name)
        self._mask = None

    def forward(self, x, mode=INFER, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, grad_out):
        if self._mask is None:
            self._no_cache()
        grad_in = np.where(self._mask, grad_out, grad_out.dtype.type(0))
        self._mask = None
        return grad_in


class MaxPool2x2(Layer):
    """Non-overlapping 2x2 max pooling, stride 2.

    Ties go to the first element in row-major window order; the argmax is
    cached so backward routes every upstream gradient to exactly one input.
    """

    def __init__(self, name: str = ""):
        super().__init__(name)
        self.argmax_indices = None
        self._in_shape = None

    def forward(self, x, mode=INFER, rng=None):
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected NCHW input, got shape {x.shape}")
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"{self.name}: spatial dims must be even, got {h}x{w}")
        oh, ow = h // 2, w // 2
        windows = x.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(n, c, oh, ow, 4)
        argmax = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        self.argmax_indices = argmax
        self._in_shape = x.shape
        return out

    def backward(self, grad_out):
        if self.argmax_indices is None:
            self._no_cache()
        n, c, h, w = self._in_shape
        oh, ow = h // 2, w // 2
        buf = np.zeros((n, c, oh, ow, 4), dtype=grad_out.dtype)
        np.put_along_axis(buf, self.argmax_indices[..., None], grad_out[..., None], axis=-1)
        grad_in = buf.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(n, c, h, w)
        self.argmax_indices = None
        self._in_shape = None
        return grad_in


class Dropout(Layer):
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate)."""

    def __init__(self, rate: float, name: str = ""):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ShapeError(f"{self.name}: dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None
        self._scale = 1.0

    def forward(self, x, mode=INFER, rng=None):
        if mode != TRAIN or self.rate == 0.0:
            self._mask = True
            self._scale = 1.0
            return x
        if rng is None:
            raise StateError(f"{self.name}: train-mode dropout requires an rng")
        self._mask = rng.random(x.shape) >= self.rate
        self._scale = 1.0 / (1.0 - self.rate)
        return x * (self._mask.astype(x.dtype) * x.dtype.type(self._scale))

    def backward(self, grad_out):
        if self._mask is None:
            self._no_cache()
        if self._mask is True:
            grad_in = grad_out
        else:
            grad_in = grad_out * (self._mask.astype(grad_out.dtype)
                                  * grad_out.dtype.type(self._scale))
        self._mask = None
        return grad_in


class Flatten(Layer):
    """Collapse all non-batch dims into one."""

    def __init__(self, name: str = ""):
        super().__init__(name)
        self._in_shape = None

    def forward(self, x, mode=INFER, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        if self._in_shape is None:
            self._no_cache()
        grad_in = grad_out.reshape(self._in_shape)
        self._in_shape = None
        return grad_in


class Linear(Layer):
    """Fully connected layer: y = x @ W.T + b."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 name: str = "", dtype=np.float32):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        std = np.sqrt(2.0 / in_features)
        self.weight = (rng.standard_normal((out_features, in_features)) * std).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._input = None

    def trainable(self):
        yield "weight", self.weight, self.grad_weight
        yield "bias", self.bias, self.grad_bias

    def forward(self, x, mode=INFER, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"{self.name}: expected input [N, {self.in_features}], got shape {x.shape}")
        out = x @ self.weight.T.astype(x.dtype, copy=False) + self.bias.astype(x.dtype, copy=False)
        _require_finite(self.name, "forward output", out)
        self._input = x
        return out

    def backward(self, grad_out):
        if self._input is None:
            self._no_cache()
        self.grad_weight = grad_out.T @ self._input
        self.grad_bias = grad_out.sum(axis=0)
        grad_in = grad_out @ self.weight.astype(grad_out.dtype, copy=False)
        _require_finite(self.name, "backward output", grad_in)
        self._input = None
        return grad_in


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row max."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Returns (loss, grad_logits) with grad = (softmax - onehot) / N.
    """
    if logits.ndim != 2:
        raise ShapeError(f"expected [N, classes] logits, got shape {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels must be in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    if not np.isfinite(loss):
        raise NumericError("softmax_cross_entropy: non-finite loss")
    probs = softmax(logits)
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)
