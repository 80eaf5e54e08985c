"""Neural layers with explicit forward/backward passes.

Every layer follows the same protocol: ``forward(x, train=False)`` returns
the layer output and stashes whatever the backward pass will need;
``backward(gy)`` consumes that stash, writes parameter gradients into
``layer.grads`` (same keys and shapes as ``layer.params``) and returns the
gradient with respect to the layer input.  A backward call must be paired
with the forward call directly before it — anything else raises StaleCache
rather than silently differentiating against the wrong intermediates.

Gate blocks inside the LSTM kernels are ordered i, f, g, o (input, forget,
cell candidate, output).  The order is load-bearing for serialization and
is pinned by the weight-format tests.
"""

import numpy as np

from . import kernels
from .errors import DegenerateInput, InvalidConfig, ShapeMismatch, StaleCache
from .tensor import Tensor

__all__ = [
    "Layer",
    "Conv1D",
    "BatchNorm1D",
    "AvgPool1D",
    "Dense",
    "Activation",
    "LSTM",
    "glorot_uniform",
]

ACTIVATION_KINDS = ("relu", "sigmoid", "tanh", "softmax")


def _arr(x, dtype):
    if isinstance(x, Tensor):
        x = x.array
    return np.asarray(x, dtype=dtype)


def _sigmoid(x):
    # Branch on sign so neither exp() overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    """Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Common parameter/gradient/cache bookkeeping.

    ``params`` holds trainable tensors, ``state`` holds persistent but
    non-trainable tensors (batch-norm running statistics), and ``grads``
    is filled by ``backward`` with the same keys as ``params``.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.state = {}
        self.grads = {}
        self._cache = None

    def variables(self):
        """Every tensor that must survive save/load."""
        out = dict(self.params)
        out.update(self.state)
        return out

    def _stash(self, *values):
        self._cache = values

    def _unstash(self):
        if self._cache is None:
            raise StaleCache(
                f"{type(self).__name__}.backward called without a matching forward"
            )
        values, self._cache = self._cache, None
        return values

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError


class Conv1D(Layer):
    """Cross-correlation over the last axis of ``[batch, channels, length]``.

    ``padding="same"`` pads so the output length is ceil(length / stride),
    splitting any odd pad with the extra column on the right; ``"valid"``
    does not pad at all.
    """

    def __init__(self, in_channels, out_channels, width, stride=1,
                 padding="same", use_bias=True, rng=None, dtype=np.float32):
        super().__init__(dtype)
        if width < 1:
            raise InvalidConfig(f"kernel width must be >= 1, got {width}")
        if stride < 1:
            raise InvalidConfig(f"stride must be >= 1, got {stride}")
        if padding not in ("same", "valid"):
            raise InvalidConfig(f"padding must be 'same' or 'valid', got {padding!r}")
        self.stride = int(stride)
        self.padding = padding
        rng = np.random.default_rng() if rng is None else rng
        fan_in = in_channels * width
        fan_out = out_channels * width
        self.params["kernels"] = glorot_uniform(
            rng, (out_channels, in_channels, width), fan_in, fan_out, self.dtype)
        # A conv feeding a batch-norm layer should not carry a bias: the
        # per-channel mean subtraction cancels it exactly, leaving a dead
        # parameter with a pure-noise gradient.
        if use_bias:
            self.params["bias"] = np.zeros(out_channels, dtype=self.dtype)

    def _pads(self, length):
        width = self.params["kernels"].shape[2]
        if self.padding == "valid":
            return 0, 0
        out_len = -(-length // self.stride)
        total = max((out_len - 1) * self.stride + width - length, 0)
        return total // 2, total - total // 2

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        kern = self.params["kernels"]
        if x.ndim != 3 or x.shape[1] != kern.shape[1]:
            raise ShapeMismatch(
                f"expected [batch, {kern.shape[1]}, length] input, got {x.shape}")
        pad_l, pad_r = self._pads(x.shape[2])
        out_len = (x.shape[2] + pad_l + pad_r - kern.shape[2]) // self.stride + 1
        if out_len < 1:
            raise DegenerateInput(
                f"input length {x.shape[2]} yields empty output for "
                f"kernel width {kern.shape[2]} ({self.padding} padding)")
        bias = self.params.get("bias")
        if bias is None:
            bias = np.zeros(kern.shape[0], dtype=self.dtype)
        y = kernels.conv1d_forward(x, kern, bias, self.stride, pad_l, pad_r)
        self._stash(x, pad_l, pad_r, y.shape)
        return y

    def backward(self, gy):
        x, pad_l, pad_r, out_shape = self._unstash()
        gy = _arr(gy, self.dtype)
        if gy.shape != out_shape:
            raise ShapeMismatch(
                f"upstream grad {gy.shape} does not match output {out_shape}")
        gx, gk, gb = kernels.conv1d_backward(
            x, self.params["kernels"], self.stride, pad_l, pad_r, gy)
        self.grads["kernels"] = gk
        if "bias" in self.params:
            self.grads["bias"] = gb
        return gx


class BatchNorm1D(Layer):
    """Per-channel normalization over ``[batch, channels, length]`` or
    ``[batch, channels]`` inputs.

    Train mode normalizes by batch statistics (population variance) and
    folds them into the running estimates with the given momentum; infer
    mode applies the running affine transform only.
    """

    def __init__(self, channels, momentum=0.9, epsilon=1e-5, dtype=np.float32):
        super().__init__(dtype)
        if not 0.0 < momentum < 1.0:
            raise InvalidConfig(f"momentum must be in (0, 1), got {momentum}")
        if epsilon <= 0.0:
            raise InvalidConfig(f"epsilon must be positive, got {epsilon}")
        self.momentum = float(momentum)
        self.epsilon = float(epsilon)
        self.params["gamma"] = np.ones(channels, dtype=self.dtype)
        self.params["beta"] = np.zeros(channels, dtype=self.dtype)
        self.state["running_mean"] = np.zeros(channels, dtype=self.dtype)
        self.state["running_var"] = np.ones(channels, dtype=self.dtype)

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        channels = self.params["gamma"].shape[0]
        if x.ndim not in (2, 3) or x.shape[1] != channels:
            raise ShapeMismatch(
                f"expected rank-2/3 input with {channels} channels, got {x.shape}")
        axes = (0,) if x.ndim == 2 else (0, 2)
        bshape = (1, -1) if x.ndim == 2 else (1, -1, 1)
        if train:
            if x.shape[0] < 2:
                raise DegenerateInput("train-mode batch normalization needs batch >= 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.state["running_mean"] *= m
            self.state["running_mean"] += (1.0 - m) * mean
            self.state["running_var"] *= m
            self.state["running_var"] += (1.0 - m) * var
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        inv = 1.0 / np.sqrt(var.reshape(bshape) + self.epsilon)
        xhat = (x - mean.reshape(bshape)) * inv
        gamma = self.params["gamma"].reshape(bshape)
        y = gamma * xhat + self.params["beta"].reshape(bshape)
        self._stash(train, xhat, inv, gamma, axes, bshape)
        return y

    def backward(self, gy):
        train, xhat, inv, gamma, axes, bshape = self._unstash()
        gy = _arr(gy, self.dtype)
        if gy.shape != xhat.shape:
            raise ShapeMismatch(
                f"upstream grad {gy.shape} does not match output {xhat.shape}")
        self.grads["gamma"] = (gy * xhat).sum(axis=axes)
        self.grads["beta"] = gy.sum(axis=axes)
        gxhat = gy * gamma
        if not train:
            return gxhat * inv
        # Batch statistics sit inside the graph in train mode:
        # dx = inv * (gxhat - mean(gxhat) - xhat * mean(gxhat * xhat)).
        keep = dict(axis=axes, keepdims=True)
        return inv * (gxhat - gxhat.mean(**keep) - xhat * (gxhat * xhat).mean(**keep))


class AvgPool1D(Layer):
    """Non-overlapping window means over the last axis; the trailing
    remainder (length mod window) is dropped."""

    def __init__(self, window, dtype=np.float32):
        super().__init__(dtype)
        if window < 1:
            raise InvalidConfig(f"window must be >= 1, got {window}")
        self.window = int(window)

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        if x.ndim != 3:
            raise ShapeMismatch(f"expected [batch, channels, length], got {x.shape}")
        if x.shape[2] < self.window:
            raise DegenerateInput(
                f"input length {x.shape[2]} shorter than pooling window {self.window}")
        y = kernels.avgpool1d_forward(x, self.window)
        self._stash(x.shape[2], y.shape)
        return y

    def backward(self, gy):
        in_length, out_shape = self._unstash()
        gy = _arr(gy, self.dtype)
        if gy.shape != out_shape:
            raise ShapeMismatch(
                f"upstream grad {gy.shape} does not match output {out_shape}")
        return kernels.avgpool1d_backward(gy, self.window, in_length)


class Dense(Layer):
    """Affine map ``x @ weights + bias`` on ``[batch, in]`` inputs."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__(dtype)
        rng = np.random.default_rng() if rng is None else rng
        self.params["weights"] = glorot_uniform(
            rng, (in_features, out_features), in_features, out_features, self.dtype)
        self.params["bias"] = np.zeros(out_features, dtype=self.dtype)

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        w = self.params["weights"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeMismatch(f"expected [batch, {w.shape[0]}] input, got {x.shape}")
        self._stash(x)
        return x @ w + self.params["bias"]

    def backward(self, gy):
        (x,) = self._unstash()
        gy = _arr(gy, self.dtype)
        w = self.params["weights"]
        if gy.shape != (x.shape[0], w.shape[1]):
            raise ShapeMismatch(
                f"upstream grad {gy.shape} does not match output "
                f"{(x.shape[0], w.shape[1])}")
        self.grads["weights"] = x.T @ gy
        self.grads["bias"] = gy.sum(axis=0)
        return gy @ w.T


class Activation(Layer):
    """Parameter-free nonlinearity.  Softmax normalizes over the last axis
    with max-subtraction; relu's derivative at exactly zero is taken as 0."""

    def __init__(self, kind, dtype=np.float32):
        super().__init__(dtype)
        if kind not in ACTIVATION_KINDS:
            raise InvalidConfig(
                f"unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}")
        self.kind = kind

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        if self.kind == "relu":
            y = np.maximum(x, 0)
            self._stash(x)
        elif self.kind == "sigmoid":
            y = _sigmoid(x)
            self._stash(y)
        elif self.kind == "tanh":
            y = np.tanh(x)
            self._stash(y)
        else:
            z = x - x.max(axis=-1, keepdims=True)
            e = np.exp(z)
            y = e / e.sum(axis=-1, keepdims=True)
            self._stash(y)
        return y

    def backward(self, gy):
        (saved,) = self._unstash()
        gy = _arr(gy, self.dtype)
        if gy.shape != saved.shape:
            raise ShapeMismatch(
                f"upstream grad {gy.shape} does not match output {saved.shape}")
        if self.kind == "relu":
            return gy * (saved > 0)
        if self.kind == "sigmoid":
            return gy * saved * (1.0 - saved)
        if self.kind == "tanh":
            return gy * (1.0 - saved * saved)
        dot = (gy * saved).sum(axis=-1, keepdims=True)
        return saved * (gy - dot)


class LSTM(Layer):
    """Single LSTM layer over ``[batch, steps, input_dim]`` sequences.

    Initial hidden and cell states are zero.  ``return_sequences=True``
    yields the full hidden sequence ``[batch, steps, hidden]``, otherwise
    only the final hidden state ``[batch, hidden]``.  The backward pass is
    full backpropagation through time either way.  The forget-gate slice
    of the bias starts at 1 so early training does not erase the cell.
    """

    def __init__(self, input_dim, hidden, return_sequences=False,
                 rng=None, dtype=np.float32):
        super().__init__(dtype)
        if hidden < 1:
            raise InvalidConfig(f"hidden size must be >= 1, got {hidden}")
        rng = np.random.default_rng() if rng is None else rng
        h4 = 4 * hidden
        self.hidden = int(hidden)
        self.return_sequences = bool(return_sequences)
        self.params["input_kernel"] = glorot_uniform(
            rng, (input_dim, h4), input_dim, h4, self.dtype)
        self.params["recurrent_kernel"] = glorot_uniform(
            rng, (hidden, h4), hidden, h4, self.dtype)
        bias = np.zeros(h4, dtype=self.dtype)
        bias[hidden:2 * hidden] = 1.0
        self.params["bias"] = bias

    def forward(self, x, train=False):
        x = _arr(x, self.dtype)
        wx = self.params["input_kernel"]
        if x.ndim != 3 or x.shape[2] != wx.shape[0] or x.shape[1] < 1:
            raise ShapeMismatch(
                f"expected [batch, steps >= 1, {wx.shape[0]}] input, got {x.shape}")
        h, cache = kernels.lstm_forward(
            x, wx, self.params["recurrent_kernel"], self.params["bias"])
        self._stash(x, cache, h.shape)
        return h if self.return_sequences else h[:, -1, :]

    def backward(self, gy):
        x, cache, h_shape = self._unstash()
        gy = _arr(gy, self.dtype)
        if self.return_sequences:
            if gy.shape != h_shape:
                raise ShapeMismatch(
                    f"upstream grad {gy.shape} does not match output {h_shape}")
            gseq = gy
        else:
            if gy.shape != (h_shape[0], h_shape[2]):
                raise ShapeMismatch(
                    f"upstream grad {gy.shape} does not match output "
                    f"{(h_shape[0], h_shape[2])}")
            gseq = np.zeros(h_shape, dtype=self.dtype)
            gseq[:, -1, :] = gy
        gx, gwx, gwh, gb = kernels.lstm_backward(
            x, self.params["input_kernel"], self.params["recurrent_kernel"],
            cache, gseq)
        self.grads["input_kernel"] = gwx
        self.grads["recurrent_kernel"] = gwh
        self.grads["bias"] = gb
        return gx
