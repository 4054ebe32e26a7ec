"""
Tests for metrics, stopping rules, history files and the training loop
"""
import logging
from dataclasses import replace

import numpy as np
import pytest

from numisnet.core.network import Network
from numisnet.core.topology import presets
from numisnet.dataset import Sample
from numisnet.errors import ConfigError, DataError, ManifestError, NumericError
from numisnet.text import NEGATIVE, POSITIVE
from numisnet.trainer import (
    HISTORY_COLUMNS,
    EpochRecord,
    Metrics,
    TensorSplit,
    TrainConfig,
    TrainingData,
    early_stop_check,
    evaluate,
    f1_score,
    read_history,
    train,
    write_history,
)

# (concept, test precision, test recall, reported test F1)
REFERENCE_TEST_RESULTS = [
    ("cornucopia", 0.85, 0.83, 0.84),
    ("patera", 0.82, 0.87, 0.84),
    ("shield", 0.71, 0.74, 0.72),
    ("eagle", 0.70, 0.81, 0.75),
    ("horse", 0.81, 0.82, 0.82),
]


def record(epoch, loss, val_accuracy=0.5):
    return EpochRecord(epoch=epoch, train_loss=loss, train_accuracy=0.5, val_loss=loss,
                       val_accuracy=val_accuracy, val_precision=0.5, val_recall=0.5,
                       val_f1=0.5, seconds=1.0)


def history_of(losses):
    return [record(i, loss) for i, loss in enumerate(losses, start=1)]


def first_stop(losses, config):
    """Epoch and reason at which the loop would stop, by calling the rule per epoch"""
    history = history_of(losses)
    for end in range(1, len(history) + 1):
        decision = early_stop_check(history[:end], config)
        if decision.stop:
            return end, decision.reason
    return None, None


def brute_force_stop(losses, config):
    """Independent scan of the three stopping rules"""
    stale = [j > 0 and losses[j] >= min(losses[:j]) for j in range(len(losses))]
    for e in range(1, len(losses) + 1):
        if losses[e - 1] < config.loss_threshold:
            return e, "loss_threshold"
        if e >= config.patience and all(stale[e - config.patience:e]):
            return e, "patience"
        if e >= config.max_epochs:
            return e, "max_epochs"
    return None, None


def noisy_decay(rng, length):
    """Decaying loss curve with random noise, plateaus and an occasional dip"""
    rate = rng.uniform(0.005, 0.2)
    sigma = rng.choice([0.0, 0.005, 0.02, 0.1])
    losses = 1.0 / (1.0 + rate * np.arange(length)) + rng.normal(0.0, sigma, size=length)
    losses = np.maximum(losses, 0.002)
    if rng.random() < 0.3:
        start = int(rng.integers(0, length))
        losses[start:] = np.maximum(losses[start:], losses[start])
    if rng.random() < 0.15:
        losses[int(rng.integers(0, length))] = 0.0005
    return losses.tolist()


def split_of(x, y):
    samples = [Sample(f"coin_{i:05d}", f"images/coin_{i:05d}.png", f"texts/coin_{i:05d}.txt",
                      "horse", POSITIVE if label else NEGATIVE, "train")
               for i, label in enumerate(y)]
    return TensorSplit(samples, x.astype(np.float32), np.asarray(y, dtype=np.int64))


@pytest.fixture
def tiny_data(rng):
    y = np.array([0, 1] * 6)
    x = rng.random((12, 12, 12, 2)) * 0.2 + y[:, None, None, None] * 0.6
    return TrainingData(train=split_of(x[:8], y[:8]), val=split_of(x[8:], y[8:]))


class TestTrainConfig:
    """Test TrainConfig defaults and validation"""

    def test_defaults(self):
        config = TrainConfig()
        assert (config.batch_size, config.max_epochs, config.loss_threshold, config.patience,
                config.lr) == (24, 200, 0.001, 30, 1e-4)
        assert config.monitor == "train_loss"

    @pytest.mark.parametrize("kwargs", [
        {"batch_size": 0},
        {"max_epochs": 10},
        {"loss_threshold": 0.0},
        {"monitor": "accuracy"},
        {"topology": "resnet"},
        {"lr": -1.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs).adam_state()


class TestEarlyStop:
    """Test early_stop_check"""

    def test_loss_threshold(self):
        decision = early_stop_check(history_of([0.5, 0.0009]), TrainConfig())
        assert decision.stop and decision.reason == "loss_threshold"

    def test_patience(self):
        losses = [0.9, 0.8, 0.7, 0.6, 0.5] + [0.5 + 0.01 * (i % 3) for i in range(30)]
        assert first_stop(losses, TrainConfig()) == (35, "patience")

    def test_improving_hits_max_epochs(self):
        losses = [0.5 + 0.001 * (200 - i) for i in range(200)]
        assert first_stop(losses, TrainConfig()) == (200, "max_epochs")

    def test_continue(self):
        assert not early_stop_check(history_of([0.5, 0.4]), TrainConfig()).stop

    def test_empty_history(self):
        with pytest.raises(ConfigError):
            early_stop_check([], TrainConfig())

    def test_validation_monitor(self):
        history = [replace(record(1, 0.5), val_loss=0.0001)]
        decision = early_stop_check(history, TrainConfig(monitor="val_loss"))
        assert decision.reason == "loss_threshold"

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12345)
        config = TrainConfig(max_epochs=15, patience=3)
        for _ in range(10_000):
            losses = (rng.integers(0, 8, size=15) / 10.0 + 0.0005).tolist()
            if rng.random() < 0.2:
                losses[int(rng.integers(0, 15))] = 0.0
            assert first_stop(losses, config) == brute_force_stop(losses, config), losses

    def test_matches_brute_force_at_defaults(self):
        rng = np.random.default_rng(2024)
        config = TrainConfig()
        assert (config.patience, config.max_epochs) == (30, 200)
        reasons = set()
        for _ in range(200):
            losses = noisy_decay(rng, config.max_epochs)
            expected = brute_force_stop(losses, config)
            assert first_stop(losses, config) == expected, losses
            reasons.add(expected[1])
        assert reasons == {"loss_threshold", "patience", "max_epochs"}


class TestMetrics:
    """Test Metrics and f1_score"""

    def test_perfect(self):
        metrics = Metrics.from_predictions(np.array([1, 0] * 5), np.array([1, 0] * 5))
        assert (metrics.accuracy, metrics.precision, metrics.recall, metrics.f1) == \
            (1.0, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("concept,precision,recall,reported", REFERENCE_TEST_RESULTS)
    def test_reference_f1(self, concept, precision, recall, reported):
        assert abs(f1_score(precision, recall) - reported) <= 0.01

    def test_cornucopia_value(self):
        assert f1_score(0.85, 0.83) == pytest.approx(0.8399, abs=1e-4)

    def test_randomized_identities(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            tp, fp, tn, fn = (int(v) for v in rng.integers(1, 500, size=4))
            metrics = Metrics.from_counts(tp, fp, tn, fn)
            assert metrics.accuracy == (tp + tn) / (tp + fp + tn + fn)
            assert metrics.precision == tp / (tp + fp)
            assert metrics.recall == tp / (tp + fn)
            assert metrics.f1 == pytest.approx(2 * tp / (2 * tp + fp + fn), rel=1e-12)
            assert not metrics.zero_division

    def test_zero_division(self, caplog):
        with caplog.at_level(logging.WARNING, logger="numisnet"):
            metrics = Metrics.from_counts(tp=0, fp=0, tn=5, fn=0)
        assert metrics.zero_division
        assert (metrics.precision, metrics.recall, metrics.f1) == (0.0, 0.0, 0.0)
        assert "undefined" in caplog.text

    def test_empty(self):
        with pytest.raises(DataError):
            Metrics.from_counts(0, 0, 0, 0)


class TestHistoryIO:
    """Test write_history / read_history"""

    def test_round_trip(self, tmp_path):
        history = [record(1, 0.6931471805599453, 0.5), record(2, 1 / 3, 0.75)]
        path = tmp_path / "models" / "horse_history.tsv"
        write_history(path, history)
        assert read_history(path) == history
        assert path.read_text(encoding="utf-8").splitlines()[0].split("\t") == HISTORY_COLUMNS

    def test_bad_header(self, tmp_path):
        path = tmp_path / "h.tsv"
        path.write_text("epoch\tloss\n1\t0.5\n", encoding="utf-8")
        with pytest.raises(ManifestError, match="line 1"):
            read_history(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "h.tsv"
        write_history(path, [record(1, 0.5)])
        with path.open("a", encoding="utf-8") as handle:
            handle.write("\t".join(["2"] + ["x"] * (len(HISTORY_COLUMNS) - 1)) + "\n")
        with pytest.raises(ManifestError, match="line 3"):
            read_history(path)


class TestEvaluate:
    """Test evaluate"""

    def test_all_correct(self, tiny_topology, rng):
        network = Network(tiny_topology, seed=3)
        x = rng.random((10, 12, 12, 2)).astype(np.float32)
        metrics = evaluate(network, x, network.predict(x))
        assert metrics.accuracy == 1.0

    def test_shape_mismatch(self, tiny_topology):
        with pytest.raises(ConfigError):
            evaluate(Network(tiny_topology), np.zeros((2, 8, 8, 2)), np.array([0, 1]))

    def test_empty(self, tiny_topology):
        with pytest.raises(DataError):
            evaluate(Network(tiny_topology), np.zeros((0, 12, 12, 2)), np.array([]))


class TestTrain:
    """Test the training loop"""

    def test_single_epoch(self, tiny_topology, tiny_data):
        result = train(TrainConfig(max_epochs=1, patience=1), tiny_data, tiny_topology)
        assert len(result.history) == 1
        assert result.stop_reason == "max_epochs"
        assert result.best_epoch == 1

    def test_deterministic(self, tiny_topology, tiny_data):
        config = TrainConfig(max_epochs=4, patience=4, lr=1e-3, batch_size=3, seed=5)
        first = train(config, tiny_data, tiny_topology)
        second = train(config, tiny_data, tiny_topology, jobs=2)
        assert [replace(r, seconds=0.0) for r in first.history] == \
            [replace(r, seconds=0.0) for r in second.history]
        for name, value in first.checkpoint.params.items():
            np.testing.assert_array_equal(value, second.checkpoint.params[name])

    def test_best_epoch_by_validation_accuracy(self, tiny_topology, tiny_data):
        config = TrainConfig(max_epochs=5, patience=5, lr=1e-3, batch_size=4)
        result = train(config, tiny_data, tiny_topology)
        best = max(r.val_accuracy for r in result.history)
        assert result.best_record.val_accuracy == best
        assert result.best_epoch == min(r.epoch for r in result.history
                                        if r.val_accuracy == best)

    def test_channel_mean_saved(self, tiny_topology, tiny_data):
        result = train(TrainConfig(max_epochs=1, patience=1), tiny_data, tiny_topology)
        mean = result.checkpoint.extras["input.channel_mean"]
        np.testing.assert_allclose(mean, tiny_data.train.x.mean(axis=(0, 1, 2)), rtol=1e-5)

    def test_non_finite_input_aborts(self, tiny_topology, tiny_data):
        tiny_data.train.x[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError, match="epoch 1"):
            train(TrainConfig(max_epochs=2, patience=1, batch_size=24), tiny_data, tiny_topology)

    @pytest.mark.slow
    def test_toy_convergence(self):
        """Mini preset separates a bright and a dark toy class"""
        rng = np.random.default_rng(0)
        y = np.array([0, 1] * 4)
        x = 0.1 + 0.8 * y[:, None, None, None] + rng.normal(0, 0.02, size=(8, 100, 100, 3))
        data = TrainingData(train=split_of(x, y), val=split_of(x, y))
        config = TrainConfig(topology="mini", lr=1e-3, batch_size=1, seed=1, patience=200)
        result = train(config, data, presets.build("mini"))
        assert result.stop_reason == "loss_threshold"
        assert result.history[-1].train_loss < 0.001
        assert len(result.history) < 200
