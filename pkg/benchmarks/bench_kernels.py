"""Times the compiled kernels against the pure-numpy fallback.

Shapes mirror what one training batch of the default model actually pushes
through the hot paths (batch 256, 45 features, 64-unit LSTMs), plus a full
loss_and_grad step end to end.  Run from the repo root:

    python3 benchmarks/bench_kernels.py [--batch 256] [--repeat 20]
"""

import argparse
import time

import numpy as np

import clids.kernels as kernels
from clids import ModelConfig, build_model


def _time(fn, repeat):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(batch):
    rng = np.random.default_rng(0)
    f32 = lambda *shape: rng.standard_normal(shape).astype(np.float32)

    x_conv = f32(batch, 32, 45)
    k_conv = f32(64, 32, 3)
    b_conv = f32(64)
    gy_conv = f32(batch, 64, 45)

    x_pool = f32(batch, 64, 44)
    gy_pool = f32(batch, 64, 22)

    x_lstm = f32(batch, 16, 64)
    wx = f32(64, 256)
    wh = f32(64, 256)
    b_lstm = f32(256)
    gy_lstm = f32(batch, 16, 64)

    def lstm_fwd():
        kernels.lstm_forward(x_lstm, wx, wh, b_lstm)

    def lstm_bwd():
        _, cache = kernels.lstm_forward(x_lstm, wx, wh, b_lstm)
        kernels.lstm_backward(x_lstm, wx, wh, cache, gy_lstm)

    graph = build_model(ModelConfig(), seed=0)
    xb = f32(batch, 45)
    yb = np.zeros((batch, 2), dtype=np.float32)
    yb[np.arange(batch), rng.integers(0, 2, batch)] = 1.0

    return [
        ("conv1d forward", lambda: kernels.conv1d_forward(
            x_conv, k_conv, b_conv, 1, 1, 1)),
        ("conv1d backward", lambda: kernels.conv1d_backward(
            x_conv, k_conv, 1, 1, 1, gy_conv)),
        ("avgpool forward", lambda: kernels.avgpool1d_forward(x_pool, 2)),
        ("avgpool backward", lambda: kernels.avgpool1d_backward(gy_pool, 2, 44)),
        ("lstm forward", lstm_fwd),
        ("lstm fwd+bwd", lstm_bwd),
        ("full train step", lambda: graph.loss_and_grad(xb, yb)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}   batch={args.batch}   "
          f"best of {args.repeat}\n")
    header = f"{'kernel':<18}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for name, fn in _cases(args.batch):
        times = {}
        for backend in backends:
            kernels.set_backend(backend)
            times[backend] = _time(fn, args.repeat)
        row = f"{name:<18}" + "".join(
            f"{times[b] * 1e3:>12.3f}ms" for b in backends)
        if "compiled" in times and "python" in times:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)

    kernels.set_backend(backends[0])


if __name__ == "__main__":
    main()
