import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adreg.config import ExperimentConfig
from adreg.errors import DivergenceError, InvalidArgumentError
from adreg.experiments import build_datasets, run_one
from adreg.trainer import (
    LOSS_CHOICES,
    OptimState,
    TrainConfig,
    expected_calibration_error,
    fit,
    sgd_step,
    step_decay_schedule,
    topk_accuracy,
)


def _state(theta, alpha, mu=0.0):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return OptimState(theta, np.zeros_like(theta), alpha, mu)


def test_sgd_plain_step():
    assert sgd_step(_state(1.0, 0.1), np.array([0.5])).theta[0] == pytest.approx(0.95, abs=1e-15)


def test_sgd_zero_gradient_fixed_point():
    s = _state([1.0, -2.0], 0.3)
    for _ in range(5):
        s = sgd_step(s, np.zeros(2))
    np.testing.assert_array_equal(s.theta, [1.0, -2.0])


def test_sgd_momentum_two_steps():
    s = _state(0.0, 0.1, 0.9)
    s = sgd_step(sgd_step(s, np.array([1.0])), np.array([1.0]))
    assert s.theta[0] == pytest.approx(-0.29, abs=1e-15)


def test_sgd_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        sgd_step(_state([1.0, 2.0], 0.1), np.zeros(3))


def test_step_decay():
    sched = step_decay_schedule(0.01, 20, 0.1)
    assert sched(0) == 0.01
    assert sched(20) == pytest.approx(0.001, rel=1e-15)
    assert sched(39) == pytest.approx(0.001, rel=1e-15)
    assert sched(40) == pytest.approx(1e-4, rel=1e-12)


def test_topk_accuracy_cases():
    logits = np.array([[3.0, 2.0, 1.0], [1.0, 3.0, 2.0], [2.0, 1.0, 3.0]])
    labels = np.array([0, 2, 2])  # second sample is correct at rank 2
    assert topk_accuracy(logits, labels, 1) == pytest.approx(2 / 3, abs=1e-15)
    assert topk_accuracy(logits, labels, 2) == 1.0
    assert topk_accuracy(logits, labels, 3) == 1.0
    assert topk_accuracy(logits, np.argmax(logits, axis=1), 1) == 1.0
    with pytest.raises(InvalidArgumentError):
        topk_accuracy(logits, labels, 4)


def test_ece_hand_cases():
    assert abs(expected_calibration_error([0.9], [True]) - 0.1) <= 1e-12
    assert abs(expected_calibration_error([1.0] * 10, [True, False] * 5) - 0.5) <= 1e-12
    # per bin, confidence equals the bin's empirical accuracy
    conf = [0.25] * 4 + [0.5] * 2 + [0.8] * 5
    hit = [1, 0, 0, 0] + [1, 0] + [1, 1, 1, 1, 0]
    assert abs(expected_calibration_error(conf, hit)) <= 1e-12


def test_ece_zero_confidence_lands_in_first_bin():
    assert expected_calibration_error([0.0, 0.0], [0, 0]) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=60), st.randoms(use_true_random=False))
def test_ece_range_and_permutation(pairs, rnd):
    conf = np.array([p[0] for p in pairs])
    hit = np.array([p[1] for p in pairs])
    e = expected_calibration_error(conf, hit)
    assert 0.0 <= e <= 1.0
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    assert expected_calibration_error(conf[perm], hit[perm]) == pytest.approx(e, abs=1e-12)


def _small_cfg(**loss):
    cfg = ExperimentConfig()
    return cfg.with_updates(dataset={"c": 4, "n_train_per_class": 40, "n_val_per_class": 20},
                            optim={"epochs": 8}, loss=loss)


def test_training_is_reproducible():
    cfg = _small_cfg(loss="ce+adr")
    a, b = run_one(cfg, 3), run_one(cfg, 3)
    assert a.rows == b.rows


def test_zero_gamma_matches_ce():
    ce = run_one(_small_cfg(loss="ce"), 1)
    adr = run_one(_small_cfg(loss="ce+adr", gamma=0.0), 1)
    for r1, r2 in zip(ce.rows, adr.rows):
        for k in r1:
            assert abs(r1[k] - r2[k]) <= 1e-9, k


@pytest.mark.parametrize("loss", LOSS_CHOICES)
def test_loss_decomposition(loss):
    rec = run_one(_small_cfg(loss=loss, gamma=0.2, lam=0.3), 0)
    weight = 0.2 if "adr" in loss else 0.0
    for r in rec.rows:
        reg = 0.3 * r["train_entropy_part"] if loss == "ce+entropy" else weight * r["train_adr_part"]
        assert r["train_loss"] == pytest.approx(r["train_ce_part"] + reg, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("loss", LOSS_CHOICES)
def test_separated_clusters_reach_full_accuracy(loss):
    cfg = ExperimentConfig().with_updates(
        dataset={"kind": "separated", "c": 2, "d": 2, "scale": 10.0, "tight_std": 0.1,
                 "n_train_per_class": 50, "n_val_per_class": 50},
        optim={"epochs": 50}, loss={"loss": loss})
    rec = run_one(cfg, 0)
    assert rec.final["val_acc_top1"] == 1.0


def test_divergence_is_reported():
    bundle = build_datasets(_small_cfg().dataset, 0)
    cfg = TrainConfig(sizes=[2, 64, 4], lr=1e6, momentum=0.0, epochs=5)
    with pytest.raises(DivergenceError) as info:
        fit(cfg, bundle.train, bundle.val)
    assert info.value.record.status == "diverged"
    assert len(info.value.record.rows) <= 5


def test_fit_rejects_wrong_sizes():
    bundle = build_datasets(_small_cfg().dataset, 0)
    with pytest.raises(InvalidArgumentError):
        fit(TrainConfig(sizes=[3, 8, 4]), bundle.train, bundle.val)


def test_noise_run_logs_corrupted_count():
    cfg = _small_cfg(loss="ce").with_updates(dataset={"noise_rate": 0.2})
    rec = run_one(cfg, 0)
    assert rec.extra["n_corrupted"] == int(0.2 * rec.extra["n_train"])


def test_longtail_run():
    cfg = _small_cfg().with_updates(dataset={"imbalance": 10.0})
    rec = run_one(cfg, 0)
    assert rec.extra["train_class_counts"] == [40, 19, 9, 4]
