"""Metrics suite, SGD epoch semantics, and the training loop."""

import math

import numpy as np
import pytest

import rffkit as rk
from rffkit.model import LogisticModel, init_model
from rffkit.training import (
    DivergenceError,
    MetricsRecord,
    TrainConfig,
    compute_metrics,
    history_csv_lines,
    sgd_epoch,
    train,
)
from rffkit import _sampling


def toy_problem(D=16, C=3, N=300, seed=0, separation=4.0):
    ds = rk.synth_gaussian_mixture(4, C, N, separation, seed=seed)
    tr, he = rk.split(ds, 0.25, seed=seed)
    fmap = rk.sample_feature_map(rk.KernelSpec.gaussian(2.0), 4, D, seed=seed + 1)
    return (rk.apply_feature_map(fmap, tr.X), tr.y,
            rk.apply_feature_map(fmap, he.X), he.y)


class TestComputeMetrics:
    def test_uniform_model(self):
        m = init_model(5, 4)
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((200, 5))
        y = rng.integers(0, 4, size=200)
        rec = compute_metrics(m, Z, y)
        assert rec.ce == pytest.approx(math.log(4), rel=1e-12)
        assert rec.ent == pytest.approx(math.log(4), rel=1e-12)
        assert rec.erll == pytest.approx(2 * math.log(4), rel=1e-12)
        # uniform logits predict class 0 everywhere (lowest-index tie break)
        assert rec.err == pytest.approx((y != 0).mean())

    def test_confident_correct_model(self):
        # one-hot-confident predictions: err = 0, ent -> 0, erll -> ce
        y = np.array([0, 1, 2, 1, 0])
        Z = np.eye(3)[y] * 50.0
        theta = np.zeros((4, 3))
        theta[:3] = np.eye(3)
        m = LogisticModel(3, 3, theta=theta)
        rec = compute_metrics(m, Z, y)
        assert rec.err == 0.0
        assert rec.ent < 1e-12
        assert rec.erll == pytest.approx(rec.ce, abs=1e-12)

    def test_erll_is_exact_sum(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            m = LogisticModel(4, 3, theta=rng.standard_normal((5, 3)))
            Z = rng.standard_normal((20, 4))
            y = rng.integers(0, 3, size=20)
            rec = compute_metrics(m, Z, y)
            assert rec.erll == rec.ce + rec.ent  # identical floats, not approx

    def test_entropy_bounded_and_ce_nonnegative(self):
        rng = np.random.default_rng(3)
        m = LogisticModel(6, 5, theta=rng.standard_normal((7, 5)) * 3)
        Z = rng.standard_normal((50, 6))
        y = rng.integers(0, 5, size=50)
        rec = compute_metrics(m, Z, y)
        assert 0.0 <= rec.ent <= math.log(5) + 1e-12
        assert rec.ce >= 0.0
        assert 0.0 <= rec.err <= 1.0

    def test_err_invariant_under_monotone_logit_rescale(self):
        rng = np.random.default_rng(4)
        theta = rng.standard_normal((5, 4))
        m = LogisticModel(4, 4, theta=theta)
        scaled = LogisticModel(4, 4, theta=theta * 3.7)  # strictly monotone map
        Z = rng.standard_normal((60, 4))
        y = rng.integers(0, 4, size=60)
        assert compute_metrics(m, Z, y).err == compute_metrics(scaled, Z, y).err

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            compute_metrics(init_model(3, 2), np.zeros((0, 3)), np.zeros(0, int))

    def test_units_conversion(self):
        rec = MetricsRecord.from_components(ce=math.log(4), ent=math.log(2),
                                            err=0.25)
        bits = rec.in_bits()
        assert bits.ce == pytest.approx(2.0, rel=1e-12)
        assert bits.ent == pytest.approx(1.0, rel=1e-12)
        assert bits.err == 0.25


class TestSgdEpoch:
    def test_zero_learning_rate_is_identity(self):
        Zt, yt, _, _ = toy_problem()
        m = init_model(16, 3, rank=2, seed=3)
        out = sgd_epoch(m, Zt, yt, 0.0, 32, _sampling.stream(0, 6))
        assert np.array_equal(out.u, m.u) and np.array_equal(out.v, m.v)

    def test_epoch_decreases_loss_on_separable_data(self):
        rng = np.random.default_rng(1)
        Z = np.vstack([rng.standard_normal((100, 3)) + 2,
                       rng.standard_normal((100, 3)) - 2])
        y = np.repeat([0, 1], 100)
        m = init_model(3, 2)
        before, _ = rk.loss_and_grad(m, Z, y)
        after, _ = rk.loss_and_grad(sgd_epoch(m, Z, y, 0.5, 16,
                                              _sampling.stream(1, 6)), Z, y)
        assert after < before

    def test_identical_rng_states_identical_parameters(self):
        Zt, yt, _, _ = toy_problem()
        m = init_model(16, 3)
        a = sgd_epoch(m, Zt, yt, 0.3, 16, _sampling.stream(7, 6))
        b = sgd_epoch(m, Zt, yt, 0.3, 16, _sampling.stream(7, 6))
        assert np.array_equal(a.theta, b.theta)

    def test_divergent_loss_raises_with_batch_index(self):
        Zt, yt, _, _ = toy_problem()
        # a learning rate near float max overflows the next batch's logits
        m = init_model(16, 3)
        with pytest.raises(DivergenceError) as info, np.errstate(all="ignore"):
            current = m
            for _ in range(50):
                current = sgd_epoch(current, Zt, yt, 1e308, 8,
                                    _sampling.stream(3, 6))
        assert info.value.batch_index >= 1  # the blown-up batch, not the first

    def test_negative_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            sgd_epoch(init_model(2, 2), np.zeros((4, 2)),
                      np.zeros(4, int), -0.1, 2, _sampling.stream(0, 6))


class TestTrain:
    def test_single_epoch_history(self):
        Zt, yt, Zh, yh = toy_problem()
        cfg = TrainConfig(learning_rate=0.5, epochs=1, batch_size=32, seed=0)
        best, hist = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
        assert len(hist) == 1
        final = compute_metrics(best, Zh, yh)
        assert final == hist[0].metrics

    def test_zero_lr_returns_initial_model_and_constant_history(self):
        Zt, yt, Zh, yh = toy_problem()
        m = init_model(16, 3, rank=2, seed=1)
        cfg = TrainConfig(learning_rate=0.0, epochs=4, batch_size=32, seed=0)
        best, hist = train(m, Zt, yt, Zh, yh, cfg)
        assert np.array_equal(best.u, m.u) and np.array_equal(best.v, m.v)
        assert len({rec.metrics for rec in hist}) == 1

    @staticmethod
    def _frozen_problem():
        # Each feature row appears once per label, so the full-batch
        # gradient at theta = 0 vanishes exactly: loss is constant by
        # construction even at a nonzero learning rate.
        rng = np.random.default_rng(0)
        Z = np.repeat(rng.standard_normal((10, 4)), 2, axis=0)
        y = np.tile([0, 1], 10)
        return Z, y

    def test_plateau_halves_lr_every_epoch_on_constant_loss(self):
        Z, y = self._frozen_problem()
        cfg = TrainConfig(learning_rate=0.8, epochs=3, batch_size=20, seed=0,
                          decay_policy="plateau", decay_monitor="ce", patience=1)
        _, hist = train(init_model(4, 2), Z, y, Z, y, cfg)
        assert [rec.lr for rec in hist] == [0.8, 0.4, 0.2]

    def test_plateau_zero_lr_sequence(self):
        # lr = 0 freezes the parameters outright; the recorded sequence is
        # still lr0, lr0/2, lr0/4 (all zero) and the history is constant
        Zt, yt, Zh, yh = toy_problem()
        cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=32, seed=0,
                          decay_policy="plateau", decay_monitor="ce", patience=1)
        _, hist = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
        assert [rec.lr for rec in hist] == [0.0, 0.0, 0.0]
        assert len({rec.metrics for rec in hist}) == 1

    def test_plateau_respects_patience(self):
        Z, y = self._frozen_problem()
        cfg = TrainConfig(learning_rate=0.8, epochs=5, batch_size=20, seed=0,
                          decay_policy="plateau", decay_monitor="ce", patience=2)
        _, hist = train(init_model(4, 2), Z, y, Z, y, cfg)
        assert [rec.lr for rec in hist] == [0.8, 0.8, 0.4, 0.4, 0.2]

    def test_best_snapshot_contract(self):
        Zt, yt, Zh, yh = toy_problem(separation=1.0)
        for monitor in ("ce", "erll", "err"):
            cfg = TrainConfig(learning_rate=2.0, epochs=8, batch_size=16, seed=2,
                              early_stop_monitor=monitor)
            best, hist = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
            returned = compute_metrics(best, Zh, yh).monitored(monitor)
            assert returned == min(rec.metrics.monitored(monitor) for rec in hist)

    def test_bitwise_reproducibility(self):
        Zt, yt, Zh, yh = toy_problem()
        cfg = TrainConfig(learning_rate=0.7, epochs=5, batch_size=16, seed=9)
        best1, hist1 = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
        best2, hist2 = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
        assert np.array_equal(best1.theta, best2.theta)
        assert hist1 == hist2

    def test_empty_heldout_rejected(self):
        Zt, yt, _, _ = toy_problem()
        cfg = TrainConfig(epochs=1)
        with pytest.raises(ValueError, match="non-empty"):
            train(init_model(16, 3), Zt, yt, np.zeros((0, 16)),
                  np.zeros(0, int), cfg)

    def test_erll_monitor_stops_no_later_when_entropy_rises(self):
        # Start confidently wrong on overlapping classes: held-out CE falls
        # while ENT climbs toward honest uncertainty.  Whenever ENT rises
        # (weakly) through the window between the two stopping epochs, the
        # ERLL argmin cannot come after the CE argmin.
        rng = np.random.default_rng(2)
        ds = rk.synth_gaussian_mixture(4, 3, 1500, 0.8, seed=5)
        tr, he = rk.split(ds, 0.4, seed=1)
        fmap = rk.sample_feature_map(rk.KernelSpec.gaussian(2.0), 4, 64, seed=2)
        Zt, Zh = rk.apply_feature_map(fmap, tr.X), rk.apply_feature_map(fmap, he.X)
        start = LogisticModel(64, 3, theta=rng.standard_normal((65, 3)) * 10.0)
        cfg = TrainConfig(learning_rate=1.0, epochs=50, batch_size=32, seed=5)
        _, hist = train(start, Zt, tr.y, Zh, he.y, cfg)
        ces = np.array([rec.metrics.ce for rec in hist])
        ents = np.array([rec.metrics.ent for rec in hist])
        erlls = np.array([rec.metrics.erll for rec in hist])
        e_ce, e_erll = int(ces.argmin()), int(erlls.argmin())
        lo, hi = min(e_ce, e_erll), max(e_ce, e_erll)
        assert ents[hi] >= ents[lo]          # the rising-entropy regime holds
        assert ents[-1] > ents[0] * 1.5      # and is substantial overall
        assert e_erll <= e_ce


class TestTrainConfig:
    def test_collects_all_violations(self):
        problems = TrainConfig.__new__(TrainConfig)
        object.__setattr__(problems, "learning_rate", -1.0)
        object.__setattr__(problems, "epochs", 0)
        object.__setattr__(problems, "batch_size", 0)
        object.__setattr__(problems, "patience", 0)
        object.__setattr__(problems, "decay_policy", "bogus")
        object.__setattr__(problems, "decay_monitor", "err")
        object.__setattr__(problems, "early_stop_monitor", "acc")
        object.__setattr__(problems, "heldout_fraction", 1.5)
        assert len(problems.validate()) == 8

    def test_valid_config_passes(self):
        TrainConfig(learning_rate=0.1, epochs=3, batch_size=8, patience=2,
                    decay_policy="plateau", decay_monitor="erll",
                    early_stop_monitor="err", heldout_fraction=0.3)


class TestHistoryCsv:
    def test_schema(self):
        Zt, yt, Zh, yh = toy_problem()
        cfg = TrainConfig(learning_rate=0.5, epochs=3, batch_size=32, seed=0)
        _, hist = train(init_model(16, 3), Zt, yt, Zh, yh, cfg)
        lines = history_csv_lines(hist)
        assert lines[0] == "epoch,lr,ce,ent,err,erll"
        assert len(lines) == 4
        for line in lines[1:]:
            assert len(line.split(",")) == 6
