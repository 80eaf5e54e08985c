import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clids import gradcheck
from clids.data import split, synth_generate
from clids.errors import EmptyDataset, InvalidConfig, ShapeMismatch
from clids.model import ModelConfig, build_model
from clids.optim import SGD, Adam, TrainConfig, dataset_pass, train

TINY = ModelConfig(**gradcheck.TINY_CONFIG)


def _params(**arrays):
    return {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}


class TestAdam:
    def test_zero_gradient_is_a_fixed_point(self):
        params = _params(w=[[1.0, -2.0], [3.0, 4.0]])
        before = params["w"].copy()
        opt = Adam(params)
        for _ in range(5):
            opt.step(params, {"w": np.zeros((2, 2))})
        np.testing.assert_array_equal(params["w"], before)

    def test_first_step_hand_evaluated(self):
        # theta=0, g=1: bias correction makes mhat=1, vhat=1 at t=1, so the
        # update is -lr / (1 + eps) = -9.99999990e-4.
        params = _params(w=[0.0])
        Adam(params, lr=1e-3).step(params, {"w": np.ones(1)})
        assert math.isclose(params["w"][0], -1e-3 / (1.0 + 1e-8),
                            rel_tol=0, abs_tol=1e-12)
        assert math.isclose(params["w"][0], -1e-3, rel_tol=1e-7)

    def test_deterministic(self, rng):
        g = rng.standard_normal((3, 4))
        runs = []
        for _ in range(2):
            params = _params(w=np.zeros((3, 4)))
            opt = Adam(params)
            for _ in range(10):
                opt.step(params, {"w": g})
            runs.append(params["w"].copy())
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_shape_drift_rejected(self):
        params = _params(w=np.zeros((2, 2)))
        with pytest.raises(ShapeMismatch):
            Adam(params).step(params, {"w": np.zeros((2, 3))})

    def test_step_counter(self):
        params = _params(w=[0.0])
        opt = Adam(params)
        assert opt.t == 0
        opt.step(params, {"w": np.ones(1)})
        opt.step(params, {"w": np.ones(1)})
        assert opt.t == 2

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=8),
           st.integers(1, 12))
    def test_second_moment_never_negative(self, grad, steps):
        g = np.array(grad, dtype=np.float64)
        params = _params(w=np.zeros(len(grad)))
        opt = Adam(params)
        for _ in range(steps):
            opt.step(params, {"w": g})
            assert np.all(opt.v["w"] >= 0.0)

    def test_lr_zero_freezes_parameters_exactly(self, rng):
        params = _params(w=rng.standard_normal(6))
        before = params["w"].copy()
        opt = Adam(params, lr=0.0)
        for _ in range(20):
            opt.step(params, {"w": rng.standard_normal(6)})
        np.testing.assert_array_equal(params["w"], before)


class TestSGD:
    def test_step_is_plain_descent(self):
        params = _params(w=[1.0, 2.0])
        SGD(lr=0.5).step(params, {"w": np.array([2.0, -4.0])})
        np.testing.assert_array_equal(params["w"], [0.0, 4.0])

    def test_shape_drift_rejected(self):
        params = _params(w=np.zeros(3))
        with pytest.raises(ShapeMismatch):
            SGD().step(params, {"w": np.zeros(4)})


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig().validate()
        assert cfg.epochs == 25
        assert cfg.batch_size == 256
        assert cfg.lr == 1e-3
        assert (cfg.beta1, cfg.beta2, cfg.epsilon) == (0.9, 0.999, 1e-8)

    @pytest.mark.parametrize("bad", [
        dict(epochs=0), dict(batch_size=0), dict(lr=0.0), dict(lr=-1.0),
        dict(beta1=1.0), dict(beta2=-0.1), dict(epsilon=0.0),
    ])
    def test_rejects(self, bad):
        with pytest.raises(InvalidConfig):
            TrainConfig(**bad).validate()


def _splits(n=48, seed=0):
    # Slice the synthetic features down to the tiny model's width; the
    # informative columns all sit at the front, so the task stays learnable.
    ds = synth_generate(n, seed=seed)
    ds = type(ds)(features=ds.features[:, :TINY.input_features],
                  labels=ds.labels)
    return split(ds)


class TestTrainLoop:
    def test_report_lengths_match_epochs(self):
        tr, val = _splits()
        graph = build_model(TINY, seed=0)
        report = train(graph, tr, val, TrainConfig(epochs=3, batch_size=16))
        for series in (report.train_loss, report.train_accuracy,
                       report.val_loss, report.val_accuracy):
            assert len(series) == 3
        rows = report.epoch_rows()
        assert [r["epoch"] for r in rows] == [1, 2, 3]

    def test_same_config_same_trajectory(self):
        tr, val = _splits()
        cfg = TrainConfig(epochs=3, batch_size=16, seed=11)
        reports = [train(build_model(TINY, seed=7), tr, val, cfg)
                   for _ in range(2)]
        assert reports[0].train_loss == reports[1].train_loss
        assert reports[0].val_accuracy == reports[1].val_accuracy

    def test_epochs_zero_rejected(self):
        tr, val = _splits()
        with pytest.raises(InvalidConfig):
            train(build_model(TINY, seed=0), tr, val, TrainConfig(epochs=0))

    def test_empty_split_rejected(self):
        tr, val = _splits()
        empty = type(tr)(features=tr.features[:0], labels=tr.labels[:0])
        cfg = TrainConfig(epochs=1, batch_size=8)
        with pytest.raises(EmptyDataset):
            train(build_model(TINY, seed=0), empty, val, cfg)
        with pytest.raises(EmptyDataset):
            train(build_model(TINY, seed=0), tr, empty, cfg)

    def test_loss_decreases_on_learnable_data(self):
        tr, val = _splits(n=96, seed=3)
        graph = build_model(TINY, seed=1)
        report = train(graph, tr, val, TrainConfig(epochs=40, batch_size=32))
        assert report.train_loss[-1] < report.train_loss[0]
        assert report.train_accuracy[-1] > 0.9

    def test_dataset_pass_runs_in_infer_mode(self):
        tr, val = _splits()
        graph = build_model(TINY, seed=0)
        running = {k: v.copy() for k, v in graph.named_variables().items()
                   if "running" in k}
        loss, acc = dataset_pass(graph, val, batch_size=8)
        assert 0.0 <= acc <= 1.0 and np.isfinite(loss)
        after = graph.named_variables()
        for name, before in running.items():
            np.testing.assert_array_equal(after[name], before)

    def test_dataset_pass_empty(self):
        tr, _ = _splits()
        empty = type(tr)(features=tr.features[:0], labels=tr.labels[:0])
        with pytest.raises(EmptyDataset):
            dataset_pass(build_model(TINY, seed=0), empty, 8)
