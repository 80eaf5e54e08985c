"""Hot-kernel backends: compiled extension with a NumPy fallback.

conv1d, average pooling, and the LSTM recurrence dominate training time,
so they exist twice: a Cython extension built at install time (``_ckern``)
and a pure-NumPy implementation (``pykern``). The active backend is
picked at import — compiled when available — and can be forced with the
environment variable CLIDS_KERNELS=python|compiled or swapped at runtime
with :func:`set_backend` (used by the parity tests and the benchmark).

Both backends share array layouts, so results agree to floating-point
accumulation order; per-backend runs are bit-deterministic.
"""

import os

import numpy as np

from . import pykern

_BACKENDS = {"python": pykern}
try:
    from . import _ckern

    _BACKENDS["compiled"] = _ckern
except ImportError:
    _ckern = None


def _initial_backend() -> str:
    forced = os.environ.get("CLIDS_KERNELS")
    if forced:
        if forced not in _BACKENDS:
            raise RuntimeError(
                f"CLIDS_KERNELS={forced!r} but available backends are "
                f"{sorted(_BACKENDS)}"
            )
        return forced
    return "compiled" if "compiled" in _BACKENDS else "python"


_active = _initial_backend()


def available_backends() -> list:
    return sorted(_BACKENDS)


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    _active = name


def _c(a):
    return np.ascontiguousarray(a)


def conv1d_forward(x, kernels, bias, stride, pad_l, pad_r):
    """x [B,C,L], kernels [O,C,W], bias [O] -> y [B,O,out_len]."""
    return _BACKENDS[_active].conv1d_fwd(
        _c(x), _c(kernels), _c(bias), stride, pad_l, pad_r
    )


def conv1d_backward(x, kernels, stride, pad_l, pad_r, gy):
    """Gradients (gx, gkernels, gbias) for conv1d_forward."""
    return _BACKENDS[_active].conv1d_bwd(
        _c(x), _c(kernels), stride, pad_l, pad_r, _c(gy)
    )


def avgpool1d_forward(x, window):
    """Non-overlapping window means; trailing remainder dropped."""
    return _BACKENDS[_active].avgpool_fwd(_c(x), window)


def avgpool1d_backward(gy, window, in_length):
    return _BACKENDS[_active].avgpool_bwd(_c(gy), window, in_length)


def lstm_forward(x, input_kernel, recurrent_kernel, bias):
    """Full LSTM pass over x [B,T,D].

    Returns the hidden sequence [B,T,H] plus an opaque cache consumed by
    :func:`lstm_backward`. The input projection x @ Wx + b is one big
    matmul here; the backend only runs the sequential recurrence.
    """
    B, T, D = x.shape
    pre = x.reshape(B * T, D) @ input_kernel + bias
    pre = _c(pre.reshape(B, T, -1).transpose(1, 0, 2))
    h_seq, c_seq, gates = _BACKENDS[_active].lstm_recurrence_fwd(
        pre, _c(recurrent_kernel)
    )
    h_out = _c(h_seq.transpose(1, 0, 2))
    return h_out, (h_seq, c_seq, gates)


def lstm_backward(x, input_kernel, recurrent_kernel, cache, gy_seq):
    """Gradients (gx, g_input_kernel, g_recurrent_kernel, g_bias).

    ``gy_seq`` is the upstream gradient on every hidden state [B,T,H];
    for last-state-only consumers all steps but the final one are zero.
    """
    h_seq, c_seq, gates = cache
    B, T, D = x.shape
    gy_tm = _c(gy_seq.transpose(1, 0, 2))
    da, g_wh = _BACKENDS[_active].lstm_recurrence_bwd(
        _c(recurrent_kernel), h_seq, c_seq, gates, gy_tm
    )
    da_flat = _c(da.transpose(1, 0, 2)).reshape(B * T, -1)
    g_wx = x.reshape(B * T, D).T @ da_flat
    gx = (da_flat @ input_kernel.T).reshape(B, T, D)
    gb = da_flat.sum(axis=0)
    return gx, g_wx, g_wh, gb
