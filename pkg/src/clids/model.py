"""Dual-head CNN-LSTM binary flow classifier.

The graph:

    input [batch, F]
      -> [batch, 1, F]
      -> (Conv1D -> BatchNorm1D -> ReLU -> AvgPool1D) per conv block
      -> flatten -> dense trunk (ReLU after each layer), ending at width 16
      -> head A:  Dense(16 -> 2) + softmax
      -> branch B: reshape [batch, 16, 1]
                   LSTM stack (all but the last return sequences)
                   Dense(hidden -> 2) + sigmoid
      -> concat [head_a ; head_b]  [batch, 4]
      -> Dense(4 -> 2) + softmax   (final output)

Classes are ordered (benign, malicious).  Training minimizes categorical
cross-entropy of the final softmax only; the head outputs are exposed for
inspection but carry no auxiliary loss.  Ties in the final probabilities
are resolved toward "malicious" — in an IDS a false alarm is cheaper than
a miss.

All trainable tensors are drawn from a single Glorot stream seeded by
``build_model``'s seed, in graph order, so (config, seed) pins every
parameter bit-for-bit.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, ShapeMismatch, WeightsFormatError
from .nn import LSTM, Activation, AvgPool1D, BatchNorm1D, Conv1D, Dense
from .tensor import Tensor

__all__ = [
    "ModelConfig",
    "ModelGraph",
    "Prediction",
    "build_model",
    "save_weights",
    "load_weights",
    "CLASS_NAMES",
]

CLASS_NAMES = ("benign", "malicious")

# Width of the trunk output; it is reshaped into this many single-feature
# timesteps for the LSTM branch, so the trunk must end exactly here.
TRUNK_WIDTH = 16

WEIGHTS_MAGIC = b"CLIDS"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``conv_blocks`` is a tuple of (filters, kernel_width, pool_window)
    triples; ``dense_trunk`` lists the trunk widths and must end at 16.
    """

    input_features: int = 45
    conv_blocks: tuple = ((32, 3, 2), (64, 3, 2))
    dense_trunk: tuple = (64, 16)
    lstm_hidden: int = 64
    lstm_layers: int = 2
    classes: int = 2

    def validate(self):
        if self.input_features < 1:
            raise InvalidConfig(f"input_features must be >= 1, got {self.input_features}")
        if self.classes != 2:
            raise InvalidConfig(f"this is a binary classifier; classes must be 2, "
                                f"got {self.classes}")
        if not self.conv_blocks:
            raise InvalidConfig("at least one conv block is required")
        for block in self.conv_blocks:
            if len(block) != 3 or any(int(v) < 1 for v in block):
                raise InvalidConfig(
                    f"conv block must be (filters, kernel_width, pool_window) "
                    f"of positive ints, got {block!r}")
        if not self.dense_trunk or any(int(w) < 1 for w in self.dense_trunk):
            raise InvalidConfig(f"dense_trunk must be positive widths, "
                                f"got {self.dense_trunk!r}")
        if self.dense_trunk[-1] != TRUNK_WIDTH:
            raise InvalidConfig(
                f"dense_trunk must end at width {TRUNK_WIDTH} (reshaped to "
                f"{TRUNK_WIDTH} timesteps x 1 feature), got {self.dense_trunk[-1]}")
        if self.lstm_hidden < 1:
            raise InvalidConfig(f"lstm_hidden must be >= 1, got {self.lstm_hidden}")
        if self.lstm_layers < 1:
            raise InvalidConfig(f"lstm_layers must be >= 1, got {self.lstm_layers}")
        length = self.input_features
        for filters, _, pool in self.conv_blocks:
            if length < pool:
                raise InvalidConfig(
                    f"pooling window {pool} exceeds remaining length {length}; "
                    f"input of {self.input_features} features is too short for "
                    f"{self.conv_blocks!r}")
            length //= pool
        return self

    def to_json_obj(self):
        return {
            "input_features": self.input_features,
            "conv_blocks": [list(b) for b in self.conv_blocks],
            "dense_trunk": list(self.dense_trunk),
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "classes": self.classes,
        }

    @classmethod
    def from_json_obj(cls, obj):
        return cls(
            input_features=int(obj["input_features"]),
            conv_blocks=tuple(tuple(int(v) for v in b) for b in obj["conv_blocks"]),
            dense_trunk=tuple(int(w) for w in obj["dense_trunk"]),
            lstm_hidden=int(obj["lstm_hidden"]),
            lstm_layers=int(obj["lstm_layers"]),
            classes=int(obj["classes"]),
        ).validate()


@dataclass(frozen=True)
class Prediction:
    """One classified flow: final (p_benign, p_malicious), the resolved
    label, and the raw head outputs for inspection."""

    probabilities: tuple
    label: str
    head_a: tuple
    head_b: tuple


def _as_matrix(x, dtype):
    if isinstance(x, Tensor):
        x = x.array
    return np.asarray(x, dtype=dtype)


class ModelGraph:
    """The assembled network.  Layers own their parameters; this class owns
    the wiring, the loss, and serialization order."""

    def __init__(self, cfg, seed, dtype=np.float32):
        cfg.validate()
        self.config = cfg
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        self._order = []

        def reg(name, layer):
            self._order.append((name, layer))
            return layer

        self.blocks = []
        in_ch = 1
        for i, (filters, width, pool) in enumerate(cfg.conv_blocks, start=1):
            conv = reg(f"conv{i}", Conv1D(in_ch, filters, width, stride=1,
                                          padding="same", use_bias=False,
                                          rng=rng, dtype=dtype))
            bn = reg(f"bn{i}", BatchNorm1D(filters, dtype=dtype))
            self.blocks.append((conv, bn, Activation("relu", dtype=dtype),
                                AvgPool1D(pool, dtype=dtype)))
            in_ch = filters

        length = cfg.input_features
        for _, _, pool in cfg.conv_blocks:
            length //= pool
        flat = in_ch * length

        self.trunk = []
        width_in = flat
        for j, width in enumerate(cfg.dense_trunk, start=1):
            dense = reg(f"trunk{j}", Dense(width_in, width, rng=rng, dtype=dtype))
            self.trunk.append((dense, Activation("relu", dtype=dtype)))
            width_in = width

        self.head_a_dense = reg("head_a", Dense(TRUNK_WIDTH, 2, rng=rng, dtype=dtype))
        self.head_a_act = Activation("softmax", dtype=dtype)

        self.lstms = []
        lstm_in = 1
        for k in range(1, cfg.lstm_layers + 1):
            last = k == cfg.lstm_layers
            self.lstms.append(reg(f"lstm{k}", LSTM(
                lstm_in, cfg.lstm_hidden, return_sequences=not last,
                rng=rng, dtype=dtype)))
            lstm_in = cfg.lstm_hidden

        self.head_b_dense = reg("head_b", Dense(cfg.lstm_hidden, 2, rng=rng, dtype=dtype))
        self.head_b_act = Activation("sigmoid", dtype=dtype)

        self.final_dense = reg("final", Dense(4, 2, rng=rng, dtype=dtype))
        self.final_act = Activation("softmax", dtype=dtype)

        self._conv_out_shape = None

    # -- parameter walks ------------------------------------------------

    def named_parameters(self):
        """Trainable tensors in canonical graph order, keyed layer/param."""
        out = {}
        for name, layer in self._order:
            for key, arr in layer.params.items():
                out[f"{name}/{key}"] = arr
        return out

    def named_variables(self):
        """Everything that must survive save/load (adds running stats)."""
        out = {}
        for name, layer in self._order:
            for key, arr in layer.variables().items():
                out[f"{name}/{key}"] = arr
        return out

    # -- forward / loss / backward --------------------------------------

    def _check_input(self, x):
        x = _as_matrix(x, self.dtype)
        if x.ndim != 2 or x.shape[1] != self.config.input_features:
            raise ShapeMismatch(
                f"expected [batch, {self.config.input_features}] input, got {x.shape}")
        return x

    def _forward_parts(self, x, train):
        """Run everything up to the final pre-softmax logits."""
        x = self._check_input(x)
        batch = x.shape[0]
        h = x.reshape(batch, 1, self.config.input_features)
        for conv, bn, act, pool in self.blocks:
            h = conv.forward(h, train)
            h = bn.forward(h, train)
            h = act.forward(h, train)
            h = pool.forward(h, train)
        self._conv_out_shape = h.shape
        h = h.reshape(batch, -1)
        for dense, act in self.trunk:
            h = act.forward(dense.forward(h, train), train)

        head_a = self.head_a_act.forward(self.head_a_dense.forward(h, train), train)

        s = h.reshape(batch, TRUNK_WIDTH, 1)
        for lstm in self.lstms:
            s = lstm.forward(s, train)
        head_b = self.head_b_act.forward(self.head_b_dense.forward(s, train), train)

        cat = np.concatenate([head_a, head_b], axis=1)
        logits = self.final_dense.forward(cat, train)
        return logits, head_a, head_b

    def forward(self, x, train=False):
        """Returns (final probabilities, head_a, head_b), each [batch, 2]."""
        logits, head_a, head_b = self._forward_parts(x, train)
        return self.final_act.forward(logits, train), head_a, head_b

    def _check_labels(self, y, batch):
        y = _as_matrix(y, self.dtype)
        if y.shape != (batch, 2):
            raise ShapeMismatch(f"expected one-hot labels [{batch}, 2], got {y.shape}")
        return y

    @staticmethod
    def _log_softmax(logits):
        m = logits.max(axis=1, keepdims=True)
        z = logits - m
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def loss_and_probs(self, x, y, train=False):
        """Forward-only mean cross-entropy of the final softmax.

        Used for validation passes and as the scalar function behind
        finite-difference gradient checks.
        """
        logits, _, _ = self._forward_parts(x, train)
        y = self._check_labels(y, logits.shape[0])
        logp = self._log_softmax(logits)
        loss = float(-(y * logp).sum() / logits.shape[0])
        return loss, np.exp(logp)

    def loss_and_grad(self, x, y):
        """Train-mode forward + full backward.

        Returns (loss, grads, probs) where grads mirrors
        ``named_parameters()``.  The cross-entropy is fused with the final
        softmax, so the backward chain starts from (p - y) / batch at the
        final dense layer.
        """
        logits, head_a, head_b = self._forward_parts(x, train=True)
        batch = logits.shape[0]
        y = self._check_labels(y, batch)
        logp = self._log_softmax(logits)
        probs = np.exp(logp)
        loss = float(-(y * logp).sum() / batch)

        g = ((probs - y) / batch).astype(self.dtype)
        g_cat = self.final_dense.backward(g)

        g_trunk_a = self.head_a_dense.backward(self.head_a_act.backward(g_cat[:, :2]))

        g_lstm = self.head_b_dense.backward(self.head_b_act.backward(g_cat[:, 2:]))
        for lstm in reversed(self.lstms):
            g_lstm = lstm.backward(g_lstm)
        g_trunk = g_trunk_a + g_lstm.reshape(batch, TRUNK_WIDTH)

        for dense, act in reversed(self.trunk):
            g_trunk = dense.backward(act.backward(g_trunk))

        g_conv = g_trunk.reshape(self._conv_out_shape)
        for conv, bn, act, pool in reversed(self.blocks):
            g_conv = conv.backward(bn.backward(act.backward(pool.backward(g_conv))))

        grads = {}
        for name, layer in self._order:
            for key, arr in layer.grads.items():
                grads[f"{name}/{key}"] = arr
        return loss, grads, probs

    def predict(self, x):
        """Infer-mode classification; ties go to malicious."""
        final, head_a, head_b = self.forward(x, train=False)
        out = []
        for probs, pa, pb in zip(final, head_a, head_b):
            label = CLASS_NAMES[1] if probs[1] >= probs[0] else CLASS_NAMES[0]
            out.append(Prediction(
                probabilities=(float(probs[0]), float(probs[1])),
                label=label,
                head_a=(float(pa[0]), float(pa[1])),
                head_b=(float(pb[0]), float(pb[1])),
            ))
        return out


def build_model(cfg=None, seed=0, dtype=np.float32):
    """Deterministically initialized ModelGraph; same (cfg, seed) gives
    bit-identical parameters."""
    return ModelGraph(cfg or ModelConfig(), seed, dtype)


# -- weights file -------------------------------------------------------
#
# Layout: b"CLIDS", one version byte, then per tensor in canonical graph
# order: name length (u16 LE), UTF-8 name, rank (u8), each dim (u32 LE),
# raw float32 LE values.  The file ends with a u64 LE checksum: the sum of
# every preceding byte mod 2**64.  Round-trips are bit-exact for float32
# graphs (the format always stores float32).


def _byte_sum(buf):
    return int(np.frombuffer(bytes(buf), dtype=np.uint8).sum(dtype=np.uint64))


def save_weights(m, path):
    buf = bytearray()
    buf += WEIGHTS_MAGIC
    buf.append(WEIGHTS_VERSION)
    for name, arr in m.named_variables().items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf.append(data.ndim)
        for dim in data.shape:
            buf += struct.pack("<I", dim)
        buf += data.tobytes()
    buf += struct.pack("<Q", _byte_sum(buf) % (1 << 64))
    Path(path).write_bytes(bytes(buf))


def load_weights(m, path):
    """Fills ``m``'s tensors in place from a weights file, validating
    magic, version, checksum, names, and shapes."""
    raw = Path(path).read_bytes()
    if len(raw) < len(WEIGHTS_MAGIC) + 1 + 8:
        raise WeightsFormatError(f"{path}: truncated weights file")
    body, tail = raw[:-8], raw[-8:]
    (stored,) = struct.unpack("<Q", tail)
    if _byte_sum(body) % (1 << 64) != stored:
        raise WeightsFormatError(f"{path}: checksum mismatch")
    if not body.startswith(WEIGHTS_MAGIC):
        raise WeightsFormatError(f"{path}: bad magic bytes")
    version = body[len(WEIGHTS_MAGIC)]
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")

    pos = len(WEIGHTS_MAGIC) + 1
    loaded = {}

    def take(n, what):
        nonlocal pos
        if pos + n > len(body):
            raise WeightsFormatError(f"{path}: truncated while reading {what}")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    while pos < len(body):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        rank = take(1, "rank")[0]
        shape = tuple(struct.unpack("<I", take(4, "dim"))[0] for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        values = np.frombuffer(take(4 * count, f"values of {name}"), dtype="<f4")
        loaded[name] = values.reshape(shape)

    expected = m.named_variables()
    if set(loaded) != set(expected):
        missing = sorted(set(expected) - set(loaded))
        extra = sorted(set(loaded) - set(expected))
        raise WeightsFormatError(
            f"{path}: tensor names do not match the model "
            f"(missing {missing}, unexpected {extra})")
    for name, arr in expected.items():
        if loaded[name].shape != arr.shape:
            raise WeightsFormatError(
                f"{path}: {name} has shape {loaded[name].shape}, "
                f"model expects {arr.shape}")
        arr[...] = loaded[name].astype(m.dtype)
