"""Finite-difference verification of every analytic gradient.

All checks run in float64.  The scalar function under test is a fixed
random projection of the layer output, L = sum(forward(x) * R), so a
single backward(R) call yields every analytic gradient at once.  Numeric
gradients use central differences with step h; agreement is measured as

    rel_error = ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)

over each whole tensor.  ``run_all`` covers every layer type plus the
full dual-head graph on a deliberately tiny configuration so the O(#params)
finite-difference sweep stays fast.
"""

from dataclasses import dataclass

import numpy as np

from . import model, nn

__all__ = ["DEFAULT_H", "DEFAULT_TOL", "CheckResult", "numeric_grad",
           "rel_error", "check_layer", "check_model", "run_all"]

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-5

# Small enough that the full-graph sweep (two forward passes per scalar
# parameter) finishes in seconds, big enough that every layer type and
# both branches are exercised.
TINY_CONFIG = dict(
    input_features=12,
    conv_blocks=((2, 3, 2), (3, 3, 2)),
    dense_trunk=(8, 16),
    lstm_hidden=4,
    lstm_layers=2,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float

    def ok(self, tol=DEFAULT_TOL):
        return self.error < tol


def _perturb_sweep(arr, f, h):
    """Central differences of the 0-arg scalar ``f`` w.r.t. ``arr``,
    perturbing ``arr`` in place and restoring it."""
    g = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * h)
    return g


def numeric_grad(f, x, h=DEFAULT_H):
    """Central-difference gradient of scalar ``f(x)``; does not mutate the
    caller's array."""
    x = np.array(x, dtype=np.float64)
    return _perturb_sweep(x, lambda: float(f(x)), h)


def rel_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def check_layer(layer, x, label, train=False, h=DEFAULT_H, proj_seed=7):
    """Gradcheck one layer on input ``x``: every parameter tensor plus the
    input gradient.  Returns a list of CheckResult."""
    x = np.array(x, dtype=np.float64)
    y = layer.forward(x, train=train)
    proj = np.random.default_rng(proj_seed).standard_normal(y.shape)

    def loss():
        return float((layer.forward(x, train=train) * proj).sum())

    layer.forward(x, train=train)
    gx = layer.backward(proj.copy())
    analytic = {"input": gx}
    analytic.update(layer.grads)

    results = []
    numeric = {"input": _perturb_sweep(x, loss, h)}
    for key, p in layer.params.items():
        numeric[key] = _perturb_sweep(p, loss, h)
    for key in analytic:
        results.append(CheckResult(f"{label}/{key}", rel_error(analytic[key], numeric[key])))
    return results


def check_model(seed=3, h=DEFAULT_H):
    """Gradcheck every parameter tensor of the full dual-head graph."""
    cfg = model.ModelConfig(**TINY_CONFIG)
    graph = model.build_model(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((4, cfg.input_features))
    y = np.zeros((4, 2))
    y[np.arange(4), rng.integers(0, 2, size=4)] = 1.0

    _, grads, _ = graph.loss_and_grad(x, y)

    def loss():
        return graph.loss_and_probs(x, y, train=True)[0]

    results = []
    for name, p in graph.named_parameters().items():
        numeric = _perturb_sweep(p, loss, h)
        results.append(CheckResult(f"graph/{name}", rel_error(grads[name], numeric)))
    return results


def run_all(seed=3, h=DEFAULT_H):
    """Every layer type on small random instances, then the full graph.

    Deterministic in ``seed``; the result order is fixed so printed output
    is stable across runs.
    """
    rng = np.random.default_rng(seed)
    results = []

    conv_same = nn.Conv1D(3, 4, 3, stride=1, padding="same", rng=rng, dtype=np.float64)
    results += check_layer(conv_same, rng.standard_normal((2, 3, 9)), "conv1d_same")

    conv_valid = nn.Conv1D(2, 3, 3, stride=2, padding="valid", rng=rng, dtype=np.float64)
    results += check_layer(conv_valid, rng.standard_normal((2, 2, 11)), "conv1d_valid_s2")

    bn = nn.BatchNorm1D(3, dtype=np.float64)
    results += check_layer(bn, rng.standard_normal((4, 3, 5)), "batchnorm_train", train=True)

    bn_inf = nn.BatchNorm1D(3, dtype=np.float64)
    bn_inf.state["running_mean"][:] = rng.standard_normal(3)
    bn_inf.state["running_var"][:] = 0.5 + rng.random(3)
    results += check_layer(bn_inf, rng.standard_normal((4, 3, 5)), "batchnorm_infer")

    pool = nn.AvgPool1D(2, dtype=np.float64)
    results += check_layer(pool, rng.standard_normal((3, 2, 7)), "avgpool")

    dense = nn.Dense(5, 4, rng=rng, dtype=np.float64)
    results += check_layer(dense, rng.standard_normal((3, 5)), "dense")

    for kind in nn.ACTIVATION_KINDS:
        act = nn.Activation(kind, dtype=np.float64)
        # Keep relu inputs clear of the kink at 0, where the derivative is
        # genuinely discontinuous and finite differences are meaningless.
        x = rng.standard_normal((3, 6))
        x = np.where(np.abs(x) < 0.1, x + 0.2, x)
        results += check_layer(act, x, kind)

    lstm_seq = nn.LSTM(3, 4, return_sequences=True, rng=rng, dtype=np.float64)
    results += check_layer(lstm_seq, rng.standard_normal((2, 5, 3)), "lstm_sequence")

    lstm_last = nn.LSTM(3, 4, return_sequences=False, rng=rng, dtype=np.float64)
    results += check_layer(lstm_last, rng.standard_normal((2, 5, 3)), "lstm_last")

    results += check_model(seed=seed, h=h)
    return results
