"""Differentiable layer primitives on batched 1D feature maps.

Activations travel through the convolutional part of a network as
float arrays of shape (batch, channels, length) and through the dense
part as (batch, features). Every layer implements ``forward`` /
``backward`` with hand-derived gradients; parameter gradients are
stashed on the layer (``d_weights`` etc.) by ``backward`` and consumed
by the optimizer.

Convolution is valid (no padding) cross-correlation, so every conv and
pool layer obeys out_len = floor((in_len - k) / stride) + 1.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "conv_out_len",
    "Conv1D",
    "MaxPool1D",
    "BatchNorm1D",
    "Dense",
    "ReLU",
    "Dropout",
    "Flatten",
    "Softmax",
    "msle_loss",
    "glorot_uniform",
]


class ShapeError(ValueError):
    """Input shape incompatible with a layer's configuration."""


def conv_out_len(in_len: int, kernel_len: int, stride: int) -> int:
    """Output length of a valid convolution or pooling window scan."""
    if in_len < kernel_len:
        raise ShapeError(f"input length {in_len} shorter than window {kernel_len}")
    return (in_len - kernel_len) // stride + 1


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _as_batch3d(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (batch, channels, length) array, got shape {x.shape}")
    return x


class Conv1D:
    """Valid 1D cross-correlation with stride.

    weights: (out_channels, in_channels, kernel_len); bias: (out_channels,).
    ``trainable=False`` marks the layer frozen: gradients are still exact
    (the optimizer decides what to skip).
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_len: int,
        stride: int = 1,
        *,
        trainable: bool = True,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        if min(in_channels, out_channels, kernel_len, stride) < 1:
            raise ValueError("conv dimensions and stride must be positive")
        rng = rng if rng is not None else np.random.default_rng()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_len = kernel_len
        self.stride = stride
        self.trainable = trainable
        fan_in = in_channels * kernel_len
        fan_out = out_channels * kernel_len
        self.weights = glorot_uniform((out_channels, in_channels, kernel_len), fan_in, fan_out, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.d_weights = None
        self.d_bias = None
        self._x = None

    def _windows(self, x):
        # (B, C, L', K) strided view of every kernel placement
        return sliding_window_view(x, self.kernel_len, axis=2)[:, :, :: self.stride, :]

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = _as_batch3d(x)
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv expects {self.in_channels} input channels, got input shape {x.shape}"
            )
        if x.shape[2] < self.kernel_len:
            raise ShapeError(
                f"input length {x.shape[2]} shorter than kernel {self.kernel_len} "
                f"(input shape {x.shape}, kernel shape {self.weights.shape})"
            )
        if train:
            self._x = x
        windows = self._windows(x)
        y = np.tensordot(windows, self.weights, axes=((1, 3), (1, 2)))  # (B, L', O)
        return np.ascontiguousarray(y.transpose(0, 2, 1)) + self.bias[None, :, None]

    def backward(self, dout, need_input_grad: bool = True):
        if self._x is None:
            raise RuntimeError("backward called before a train-mode forward")
        x = self._x
        dout = np.asarray(dout)
        windows = self._windows(x)
        if dout.shape != (x.shape[0], self.out_channels, windows.shape[2]):
            raise ShapeError(f"upstream gradient shape {dout.shape} does not match forward output")
        self.d_weights = np.tensordot(dout, windows, axes=((0, 2), (0, 2)))
        self.d_bias = dout.sum(axis=(0, 2))
        if not need_input_grad:
            return None
        # Scatter the per-window gradient back onto the input positions.
        dcol = np.tensordot(dout, self.weights, axes=((1,), (0,)))  # (B, L', C, K)
        dx = np.zeros_like(x)
        l_out = dout.shape[2]
        for k in range(self.kernel_len):
            dx[:, :, k : k + self.stride * l_out : self.stride] += dcol[:, :, :, k].transpose(0, 2, 1)
        return dx

    def out_len(self, in_len: int) -> int:
        return conv_out_len(in_len, self.kernel_len, self.stride)

    def parameters(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def gradients(self):
        return [self.d_weights, self.d_bias]


class MaxPool1D:
    """Max pooling over sliding windows; gradient routes to the first
    maximum of each window."""

    def __init__(self, pool_len: int, stride: int):
        if pool_len < 1 or stride < 1:
            raise ValueError("pool_len and stride must be positive")
        self.pool_len = pool_len
        self.stride = stride
        self._arg = None
        self._in_shape = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = _as_batch3d(x)
        if x.shape[2] < self.pool_len:
            raise ShapeError(f"input length {x.shape[2]} shorter than pool window {self.pool_len}")
        windows = sliding_window_view(x, self.pool_len, axis=2)[:, :, :: self.stride, :]
        arg = windows.argmax(axis=-1)  # argmax picks the first maximum on ties
        out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        if train:
            self._arg = arg
            self._in_shape = x.shape
        return out

    def backward(self, dout, need_input_grad: bool = True):
        if self._arg is None:
            raise RuntimeError("backward called before a train-mode forward")
        dout = np.asarray(dout)
        if dout.shape != self._arg.shape:
            raise ShapeError(f"upstream gradient shape {dout.shape} does not match forward output")
        if not need_input_grad:
            return None
        b, c, l_out = dout.shape
        dx = np.zeros(self._in_shape, dtype=dout.dtype)
        pos = np.arange(l_out)[None, None, :] * self.stride + self._arg
        bi = np.arange(b)[:, None, None]
        ci = np.arange(c)[None, :, None]
        np.add.at(dx, (bi, ci, pos), dout)
        return dx

    def out_len(self, in_len: int) -> int:
        return conv_out_len(in_len, self.pool_len, self.stride)

    def parameters(self):
        return []

    def gradients(self):
        return []


class BatchNorm1D:
    """Per-channel batch normalization over (batch, length).

    Train mode uses biased batch statistics and updates the running
    estimates with ``run = (1 - momentum) * run + momentum * batch``;
    eval mode normalizes with the running estimates. gamma/beta are the
    trainable affine parameters (2 per channel).
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, *, dtype=np.float64):
        if channels < 1:
            raise ValueError("channels must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must be in (0, 1), got {momentum}")
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.trainable = True
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.d_gamma = None
        self.d_beta = None
        self._cache = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = _as_batch3d(x)
        if x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm over {self.channels} channels got input shape {x.shape}")
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch norm training requires batch size >= 2")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))  # biased estimator
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(x.dtype)
            self.running_var = ((1 - m) * self.running_var + m * var).astype(x.dtype)
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        if train:
            self._cache = (xhat, inv_std, x.shape[0] * x.shape[2])
        return self.gamma[None, :, None] * xhat + self.beta[None, :, None]

    def backward(self, dout, need_input_grad: bool = True):
        if self._cache is None:
            raise RuntimeError("backward called before a train-mode forward")
        xhat, inv_std, n = self._cache
        dout = np.asarray(dout)
        if dout.shape != xhat.shape:
            raise ShapeError(f"upstream gradient shape {dout.shape} does not match forward output")
        self.d_gamma = (dout * xhat).sum(axis=(0, 2))
        self.d_beta = dout.sum(axis=(0, 2))
        if not need_input_grad:
            return None
        scale = (self.gamma * inv_std)[None, :, None]
        return scale * (dout - self.d_beta[None, :, None] / n - xhat * self.d_gamma[None, :, None] / n)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def gradients(self):
        return [self.d_gamma, self.d_beta]


class Dense:
    """Fully connected layer on (batch, features) activations."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        *,
        trainable: bool = True,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dense dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.trainable = trainable
        self.weights = glorot_uniform((out_dim, in_dim), in_dim, out_dim, rng, dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.d_weights = None
        self.d_bias = None
        self._x = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense expects (batch, {self.in_dim}) input, got shape {x.shape} "
                f"for weights {self.weights.shape}"
            )
        if train:
            self._x = x
        return x @ self.weights.T + self.bias

    def backward(self, dout, need_input_grad: bool = True):
        if self._x is None:
            raise RuntimeError("backward called before a train-mode forward")
        dout = np.asarray(dout)
        if dout.shape != (self._x.shape[0], self.out_dim):
            raise ShapeError(f"upstream gradient shape {dout.shape} does not match forward output")
        self.d_weights = dout.T @ self._x
        self.d_bias = dout.sum(axis=0)
        if not need_input_grad:
            return None
        return dout @ self.weights

    def parameters(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def gradients(self):
        return [self.d_weights, self.d_bias]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = np.asarray(x)
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout, need_input_grad: bool = True):
        if self._mask is None:
            raise RuntimeError("backward called before a train-mode forward")
        if not need_input_grad:
            return None
        return np.asarray(dout) * self._mask

    def parameters(self):
        return []

    def gradients(self):
        return []


class Dropout:
    """Inverted dropout: train mode zeroes units with probability ``p``
    and scales survivors by 1/(1-p); eval mode is the identity."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"degenerate dropout probability {p}; need 0 <= p < 1")
        self.p = p
        self._mask = None

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x)
        if not train or self.p == 0.0:
            self._mask = None if not train else np.broadcast_to(True, x.shape)
            return x
        if rng is None:
            raise ValueError("train-mode dropout requires an rng")
        keep = rng.random(x.shape) >= self.p
        self._mask = keep
        return x * keep / (1.0 - self.p)

    def backward(self, dout, need_input_grad: bool = True):
        if self._mask is None:
            raise RuntimeError("backward called before a train-mode forward")
        if not need_input_grad:
            return None
        if self.p == 0.0:
            return np.asarray(dout)
        return np.asarray(dout) * self._mask / (1.0 - self.p)

    def parameters(self):
        return []

    def gradients(self):
        return []


class Flatten:
    """(batch, channels, length) -> (batch, channels * length), channel-major."""

    def __init__(self):
        self._in_shape = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = _as_batch3d(x)
        if train:
            self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, need_input_grad: bool = True):
        if self._in_shape is None:
            raise RuntimeError("backward called before a train-mode forward")
        if not need_input_grad:
            return None
        return np.asarray(dout).reshape(self._in_shape)

    def parameters(self):
        return []

    def gradients(self):
        return []


class Softmax:
    """Row-wise softmax on (batch, classes)."""

    def __init__(self):
        self._out = None

    def forward(self, x, train: bool = False, rng=None) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 2:
            raise ShapeError(f"softmax expects (batch, classes), got shape {x.shape}")
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=1, keepdims=True)
        if train:
            self._out = out
        return out

    def backward(self, dout, need_input_grad: bool = True):
        if self._out is None:
            raise RuntimeError("backward called before a train-mode forward")
        if not need_input_grad:
            return None
        p = self._out
        dout = np.asarray(dout)
        return p * (dout - (dout * p).sum(axis=1, keepdims=True))

    def parameters(self):
        return []

    def gradients(self):
        return []


def msle_loss(pred, target):
    """Mean squared logarithmic error and its gradient w.r.t. ``pred``.

    For a single prediction of K class scores,
    loss = (1/K) * sum_i (ln(pred_i + 1) - ln(target_i + 1))^2; a
    (batch, K) input averages the per-sample losses. Returns
    ``(loss, grad)`` with ``grad`` shaped like ``pred``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if np.any(pred < 0):
        raise ValueError("msle domain error: negative prediction entries")
    diff = np.log1p(pred) - np.log1p(target)
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / (pred + 1.0) / diff.size
    return loss, grad
