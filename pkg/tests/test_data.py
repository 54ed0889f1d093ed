import gzip
import math
import struct

import numpy as np
import pytest

from adreg import data
from adreg.errors import FormatError, InvalidArgumentError


def test_separated_clusters_linearly_separable():
    specs = [data.ClusterSpec(np.array([-10.0, 0.0]), 0.1, 200), data.ClusterSpec(np.array([10.0, 0.0]), 0.1, 200)]
    ds = data.gaussian_clusters(specs, seed=0)
    pred = (ds.features[:, 0] > 0).astype(int)
    assert np.mean(pred == ds.labels) == 1.0


def test_generation_is_deterministic():
    a = data.overlapping_pairs(seed=3)
    b = data.overlapping_pairs(seed=3)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert data.overlapping_pairs(seed=4).features.tobytes() != a.features.tobytes()


def test_cluster_spec_validation():
    with pytest.raises(InvalidArgumentError):
        data.ClusterSpec(np.zeros(2), 0.0, 10)
    with pytest.raises(InvalidArgumentError):
        data.gaussian_clusters([data.ClusterSpec(np.zeros(2), 1.0, 5)], 0)


def _log_density(x, mean, std):
    d = x.shape[1]
    return -0.5 * np.sum((x - mean) ** 2, axis=1) / std**2 - d * np.log(std)


@pytest.mark.parametrize("d, stds", [(2, (1.0, 1.0)), (2, (0.5, 1.0)), (8, (1.0, 1.0))])
def test_overlapping_pair_bayes_error(d, stds):
    std = stds[0]
    specs = data.overlapping_pair_specs(4, d, gap=0.5 * std, tight_std=stds[0], loose_std=stds[1], n_per_class=1)
    a, b = specs[0], specs[1]
    assert np.linalg.norm(a.mean - b.mean) == pytest.approx(0.5 * std)
    rng = np.random.default_rng(0)
    n = 200_000
    xa = a.mean + a.std * rng.standard_normal((n, d))
    xb = b.mean + b.std * rng.standard_normal((n, d))
    err_a = np.mean(_log_density(xa, b.mean, b.std) > _log_density(xa, a.mean, a.std))
    err_b = np.mean(_log_density(xb, a.mean, a.std) > _log_density(xb, b.mean, b.std))
    assert 0.5 * (err_a + err_b) >= 0.05


def test_overlapping_pairs_layout():
    specs = data.overlapping_pair_specs(10, 2, gap=1.0, tight_std=0.5, loose_std=1.0, n_per_class=5)
    assert len(specs) == 10
    assert [s.std for s in specs[:4]] == [0.5, 1.0, 0.5, 1.0]
    # pair partners are gap apart, other classes are far
    dist = np.linalg.norm(specs[0].mean - specs[2].mean)
    assert np.linalg.norm(specs[0].mean - specs[1].mean) == pytest.approx(1.0)
    assert dist > 3.0


def test_split_and_standardize():
    ds = data.overlapping_pairs(c=4, n_per_class=30, seed=1)
    train, val = data.split_per_class(ds, 10, seed=0)
    assert train.n == 80 and val.n == 40 and val.split == "validation"
    assert np.all(val.class_counts() == 10)
    tr, va = data.standardize(train, val)
    np.testing.assert_allclose(tr.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(tr.features.std(axis=0), 1.0, rtol=1e-12)
    assert not np.allclose(va.features.mean(axis=0), 0.0, atol=1e-12)


# --- IDX ------------------------------------------------------------------------

def _fixture(tmp_path, img_bytes, lab_bytes):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ip.write_bytes(img_bytes)
    lp.write_bytes(lab_bytes)
    return ip, lp


def test_idx_hand_written_fixture(tmp_path):
    img = bytes([0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 255])
    lab = bytes([0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 3, 9])
    ds = data.load_idx(*_fixture(tmp_path, img, lab))
    np.testing.assert_array_equal(ds.features, [[0.0], [1.0]])
    np.testing.assert_array_equal(ds.labels, [3, 9])
    assert ds.c == 10


def test_idx_wrong_magic(tmp_path):
    img = struct.pack(">IIII", 0x00000801, 1, 1, 1) + b"\x00"
    lab = struct.pack(">II", 0x00000801, 1) + b"\x00"
    with pytest.raises(FormatError) as info:
        data.load_idx(*_fixture(tmp_path, img, lab))
    assert info.value.offset == 0


def test_idx_truncated(tmp_path):
    img = struct.pack(">IIII", 0x00000803, 3, 2, 2) + b"\x00" * 11
    lab = struct.pack(">II", 0x00000801, 3) + b"\x00" * 3
    with pytest.raises(FormatError, match="truncated"):
        data.load_idx(*_fixture(tmp_path, img, lab))


def test_idx_count_mismatch(tmp_path):
    img = struct.pack(">IIII", 0x00000803, 2, 1, 1) + b"\x00\x01"
    lab = struct.pack(">II", 0x00000801, 3) + b"\x00\x01\x02"
    with pytest.raises(FormatError, match="2 images but 3 labels"):
        data.load_idx(*_fixture(tmp_path, img, lab))


def test_idx_round_trip_and_gzip(tmp_path, rng):
    images = rng.integers(0, 256, size=(6, 3, 4), dtype=np.uint8)
    labels = rng.integers(0, 10, size=6, dtype=np.uint8)
    data.write_idx(images, labels, tmp_path / "i", tmp_path / "l")
    ds = data.load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(np.rint(ds.features * 255).astype(np.uint8), images.reshape(6, 12))
    np.testing.assert_array_equal(ds.labels, labels)
    (tmp_path / "i.gz").write_bytes(gzip.compress((tmp_path / "i").read_bytes()))
    ds2 = data.load_idx(tmp_path / "i.gz", tmp_path / "l")
    np.testing.assert_array_equal(ds2.features, ds.features)


# --- transforms --------------------------------------------------------------------

def _toy(n=1000, c=10):
    rng = np.random.default_rng(0)
    return data.LabeledDataset(rng.normal(size=(n, 2)), np.arange(n) % c, c)


def test_noise_rate_zero_is_identity():
    ds = _toy()
    noisy, idx = data.inject_label_noise(ds, 0.0, seed=1)
    assert idx.size == 0
    np.testing.assert_array_equal(noisy.labels, ds.labels)


def test_noise_rate_one_binary_flips_everything():
    ds = _toy(50, 2)
    noisy, _ = data.inject_label_noise(ds, 1.0, seed=1)
    np.testing.assert_array_equal(noisy.labels, 1 - ds.labels)


@pytest.mark.parametrize("rate", [0.2, 0.29, 0.4, 0.6, 0.8])
def test_noise_count_and_no_self_maps(rate):
    ds = _toy()
    noisy, idx = data.inject_label_noise(ds, rate, seed=7)
    assert idx.size == math.floor(rate * 1000 + 1e-9)
    changed = np.flatnonzero(noisy.labels != ds.labels)
    np.testing.assert_array_equal(changed, idx)
    assert ds.labels is not noisy.labels


def test_noise_is_seeded():
    ds = _toy()
    a, _ = data.inject_label_noise(ds, 0.3, seed=5)
    b, _ = data.inject_label_noise(ds, 0.3, seed=5)
    assert a.labels.tobytes() == b.labels.tobytes()


def test_noise_spreads_over_other_classes():
    ds = _toy(20000, 5)
    noisy, idx = data.inject_label_noise(ds, 0.5, seed=0)
    shift = (noisy.labels[idx] - ds.labels[idx]) % 5
    counts = np.bincount(shift, minlength=5)
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] / idx.size - 0.25) < 0.02)


def test_longtail_profiles():
    two = data.LabeledDataset(np.zeros((200, 1)), np.repeat([0, 1], 100), 2)
    assert data.longtail_resample(two, 10.0, 0).class_counts().tolist() == [100, 10]
    ten = _toy(1000, 10)
    assert data.longtail_resample(ten, 1.0, 0).class_counts().tolist() == [100] * 10
    lt = data.longtail_resample(ten, 100.0, 0).class_counts()
    assert lt[0] == 100 and lt[-1] == 1
    assert np.all(np.diff(lt) <= 0)
    with pytest.raises(InvalidArgumentError):
        data.longtail_resample(ten, 0.5, 0)


def test_batches_partition_and_determinism():
    ds = _toy(10, 2)
    sizes = [len(y) for _, y in data.batches(ds, 3, seed=0, epoch=0)]
    assert sizes == [3, 3, 3, 1]
    order = lambda e: np.concatenate([x[:, 0] for x, _ in data.batches(ds, 3, 0, e)])  # noqa: E731
    np.testing.assert_array_equal(order(0), order(0))
    assert not np.array_equal(order(0), order(1))
    np.testing.assert_array_equal(np.sort(order(0)), np.sort(ds.features[:, 0]))


def test_export_csv(tmp_path):
    ds = _toy(4, 2)
    data.export_csv(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "f0,f1,label"
    assert len(lines) == 5
