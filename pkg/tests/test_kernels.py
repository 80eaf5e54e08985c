"""Backend agreement: the compiled kernels and the NumPy fallback must be
interchangeable, so every case runs through both and compares."""

import os
import subprocess
import sys

import numpy as np
import pytest

from clids import kernels

HAVE_COMPILED = "compiled" in kernels.available_backends()

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled extension not built")

# float32 sums re-associate under BLAS, so the single-precision bound is
# looser than machine epsilon but far tighter than any modeling tolerance.
TOLS = {np.float32: dict(rtol=1e-5, atol=1e-5),
        np.float64: dict(rtol=1e-12, atol=1e-12)}


def _on(backend, fn, *args):
    previous = kernels.active_backend()
    kernels.set_backend(backend)
    try:
        return fn(*args)
    finally:
        kernels.set_backend(previous)


def _assert_backends_agree(fn, *args, dtype):
    got_py = _on("python", fn, *args)
    got_c = _on("compiled", fn, *args)
    if not isinstance(got_py, tuple):
        got_py, got_c = (got_py,), (got_c,)
    for a, b in zip(got_py, got_c):
        np.testing.assert_allclose(a, b, **TOLS[dtype])


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv1d_parity(dtype, rng):
    cases = [
        # (batch, in_ch, length, out_ch, width, stride, pad_l, pad_r)
        (4, 3, 45, 8, 3, 1, 1, 1),
        (2, 1, 45, 32, 3, 2, 1, 1),
        (3, 5, 10, 4, 4, 3, 2, 3),
        (1, 2, 5, 3, 7, 1, 3, 3),
        (2, 2, 4, 3, 6, 2, 0, 4),   # leading kernel taps never touch real input
        (2, 3, 6, 4, 2, 4, 5, 5),   # pad wider than the kernel
        (5, 4, 1, 2, 1, 1, 0, 0),   # single-column input
    ]
    for b, c, length, o, w, stride, pl, pr in cases:
        x = rng.standard_normal((b, c, length)).astype(dtype)
        k = rng.standard_normal((o, c, w)).astype(dtype)
        bias = rng.standard_normal(o).astype(dtype)
        out_len = (length + pl + pr - w) // stride + 1
        gy = rng.standard_normal((b, o, out_len)).astype(dtype)
        _assert_backends_agree(
            kernels.conv1d_forward, x, k, bias, stride, pl, pr, dtype=dtype)
        _assert_backends_agree(
            kernels.conv1d_backward, x, k, stride, pl, pr, gy, dtype=dtype)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_avgpool_parity(dtype, rng):
    for b, c, length, window in [(4, 3, 44, 2), (2, 8, 9, 3), (1, 1, 5, 5),
                                 (3, 2, 7, 2)]:
        x = rng.standard_normal((b, c, length)).astype(dtype)
        gy = rng.standard_normal((b, c, length // window)).astype(dtype)
        _assert_backends_agree(kernels.avgpool1d_forward, x, window, dtype=dtype)
        _assert_backends_agree(
            kernels.avgpool1d_backward, gy, window, length, dtype=dtype)


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_lstm_parity(dtype, rng):
    for b, t, d, h in [(4, 16, 1, 8), (2, 5, 3, 4), (1, 1, 2, 6), (3, 7, 64, 16)]:
        x = rng.standard_normal((b, t, d)).astype(dtype)
        wx = (rng.standard_normal((d, 4 * h)) * 0.3).astype(dtype)
        wh = (rng.standard_normal((h, 4 * h)) * 0.3).astype(dtype)
        bias = rng.standard_normal(4 * h).astype(dtype)
        gy = rng.standard_normal((b, t, h)).astype(dtype)

        h_py, cache_py = _on("python", kernels.lstm_forward, x, wx, wh, bias)
        h_c, cache_c = _on("compiled", kernels.lstm_forward, x, wx, wh, bias)
        np.testing.assert_allclose(h_py, h_c, **TOLS[dtype])

        g_py = _on("python", kernels.lstm_backward, x, wx, wh, cache_py, gy)
        g_c = _on("compiled", kernels.lstm_backward, x, wx, wh, cache_c, gy)
        for a, bb in zip(g_py, g_c):
            np.testing.assert_allclose(a, bb, **TOLS[dtype])


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_set_backend_round_trip():
    previous = kernels.active_backend()
    try:
        for name in kernels.available_backends():
            kernels.set_backend(name)
            assert kernels.active_backend() == name
    finally:
        kernels.set_backend(previous)


def test_env_var_forces_backend():
    out = subprocess.run(
        [sys.executable, "-c",
         "from clids import kernels; print(kernels.active_backend())"],
        capture_output=True, text=True, check=True,
        env={**os.environ, "CLIDS_KERNELS": "python"},
    )
    assert out.stdout.strip() == "python"


def test_env_var_unknown_backend_fails_fast():
    out = subprocess.run(
        [sys.executable, "-c", "import clids.kernels"],
        capture_output=True, text=True,
        env={**os.environ, "CLIDS_KERNELS": "gpu"},
    )
    assert out.returncode != 0
    assert "gpu" in out.stderr
