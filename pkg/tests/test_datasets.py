import struct

import numpy as np
import pytest

from simfed.datasets import (
    Dataset,
    NoiseSpec,
    PartitionPlan,
    load_idx,
    normalize_center,
    pad_features,
    partition,
    relabel_uniform,
    synth_classification,
    synth_noise,
    to_csv,
)
from simfed.errors import ConfigError, FormatError
from simfed.models import ModelSpec, TrainConfig, evaluate, init_params, train_local


def test_synth_classification_deterministic_and_balanced():
    a = synth_classification(101, 8, 4, seed=5)
    b = synth_classification(101, 8, 4, seed=5)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    counts = np.bincount(a.y, minlength=4)
    assert counts.max() - counts.min() <= 1


def test_synth_classification_trainable():
    # Two well-separated classes: logistic should exceed 95% in 20 epochs.
    ds = synth_classification(400, 10, 2, seed=7, class_separation=4.0)
    spec = ModelSpec(kind="logistic", input_dim=10, num_classes=2)
    cfg = TrainConfig(learning_rate=0.2, batch_size=32, local_epochs_per_round=20)
    params = train_local(spec, init_params(spec, np.random.default_rng(0)), ds, cfg,
                         np.random.default_rng(1))
    _, accuracy = evaluate(spec, params, ds)
    assert accuracy > 0.95


def test_synth_noise_deterministic_and_disjoint():
    a = synth_noise(200, 10, 4, seed=9, shift=8.0)
    b = synth_noise(200, 10, 4, seed=9, shift=8.0)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    clean = synth_classification(200, 10, 4, seed=9, class_separation=3.0)
    gap = np.linalg.norm(a.X.mean(axis=0) - clean.X.mean(axis=0))
    assert gap > 4.0


def test_clean_model_scores_chance_on_noise():
    clean = synth_classification(600, 10, 4, seed=11, class_separation=4.0)
    noise = synth_noise(2000, 10, 4, seed=12)
    spec = ModelSpec(kind="logistic", input_dim=10, num_classes=4)
    cfg = TrainConfig(learning_rate=0.2, batch_size=32, local_epochs_per_round=20)
    params = train_local(spec, init_params(spec, np.random.default_rng(2)), clean, cfg,
                         np.random.default_rng(3))
    _, acc_clean = evaluate(spec, params, clean)
    _, acc_noise = evaluate(spec, params, noise)
    assert acc_clean > 0.9
    assert abs(acc_noise - 0.25) < 0.08
    assert acc_noise < acc_clean - 0.3


def _write_idx_pair(tmp_path, images, labels):
    # Independent writer: struct-packed big-endian IDX files.
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    count, rows, cols = images.shape
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, count, rows, cols))
        fh.write(images.tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, labels.size))
        fh.write(labels.tobytes())
    return str(img_path), str(lbl_path)


def test_load_idx_round_trip(tmp_path):
    images = np.array(
        [[[0, 128], [255, 3]], [[10, 20], [30, 40]]], dtype=np.uint8
    )
    labels = np.array([1, 0], dtype=np.uint8)
    img_path, lbl_path = _write_idx_pair(tmp_path, images, labels)
    ds = load_idx(img_path, lbl_path)
    assert ds.X.shape == (2, 4)
    assert np.allclose(ds.X[0], [0.0, 128 / 255, 1.0, 3 / 255])
    assert list(ds.y) == [1, 0]


def test_load_idx_bad_magic(tmp_path):
    img_path = tmp_path / "bad.idx"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0xDEAD, 1, 2, 2))
        fh.write(bytes(4))
    lbl_path = tmp_path / "lbl.idx"
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, 1))
        fh.write(bytes(1))
    with pytest.raises(FormatError):
        load_idx(str(img_path), str(lbl_path))


def test_load_idx_truncated_header(tmp_path):
    img_path = tmp_path / "trunc.idx"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000803, 1))
    with pytest.raises(FormatError):
        load_idx(str(img_path), str(img_path))


def test_load_idx_count_mismatch(tmp_path):
    images = np.zeros((2, 2, 2), dtype=np.uint8)
    labels = np.zeros(3, dtype=np.uint8)
    img_path, lbl_path = _write_idx_pair(tmp_path, images, labels)
    with pytest.raises(FormatError):
        load_idx(img_path, lbl_path)


def test_pad_features():
    ds = Dataset(X=np.ones((3, 2)), y=np.zeros(3, dtype=np.int64), class_count=2)
    padded = pad_features(ds, 5)
    assert padded.X.shape == (3, 5)
    assert np.all(padded.X[:, 2:] == 0)
    with pytest.raises(ConfigError):
        pad_features(ds, 1)


def test_normalize_center_properties():
    rng = np.random.default_rng(20)
    X = rng.uniform(3, 9, size=(50, 4))
    X[:, 2] = 7.5  # constant feature
    ds = Dataset(X=X, y=rng.integers(0, 2, 50).astype(np.int64), class_count=2)
    normed = normalize_center(ds)
    assert np.allclose(normed.X.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(normed.X[:, 2], 0.0)
    twice = normalize_center(normed)
    assert np.allclose(twice.X, normed.X, atol=1e-9)


def _plan(**overrides):
    base = dict(
        initiator_size=40,
        initiator_test_size=10,
        rp_count=2,
        rp_size=40,
        rp_test_size=10,
        up_count=1,
        up_clean_size=20,
        up_noise_size=20,
        up_clean_test_size=5,
        up_noise_test_size=5,
    )
    base.update(overrides)
    return PartitionPlan(**base)


def test_partition_disjoint_and_sized():
    clean = synth_classification(400, 6, 4, seed=31)
    noise = synth_noise(100, 6, 4, seed=32)
    shards = partition(clean, noise, _plan(), seed=33)
    assert set(shards) == {"initiator", "rp1", "rp2", "up1"}
    assert len(shards["initiator"].train) == 40
    assert len(shards["up1"].train) == 40
    # Disjointness via exact row matching against the clean pool.
    seen = set()
    for key in ("initiator", "rp1", "rp2"):
        for row in shards[key].train.X:
            token = row.tobytes()
            assert token not in seen
            seen.add(token)


def test_partition_noise_fraction():
    clean = synth_classification(400, 6, 4, seed=41)
    noise = synth_noise(100, 6, 4, seed=42)
    shards = partition(clean, noise, _plan(), seed=43)
    up_train = shards["up1"].train
    clean_rows = {row.tobytes() for row in clean.X}
    n_noise = sum(1 for row in up_train.X if row.tobytes() not in clean_rows)
    assert abs(n_noise - 20) <= 1


def test_partition_deterministic():
    clean = synth_classification(400, 6, 4, seed=51)
    noise = synth_noise(100, 6, 4, seed=52)
    a = partition(clean, noise, _plan(), seed=53)
    b = partition(clean, noise, _plan(), seed=53)
    for key in a:
        assert np.array_equal(a[key].train.X, b[key].train.X)
        assert np.array_equal(a[key].train.y, b[key].train.y)


def test_partition_infeasible_plan():
    clean = synth_classification(50, 6, 4, seed=61)
    noise = synth_noise(10, 6, 4, seed=62)
    with pytest.raises(ConfigError):
        partition(clean, noise, _plan(), seed=63)


def test_partition_paper_shaped_plan_at_reduced_scale():
    # 4 RP x 10,000; 2 UP x (5,000 + 5,000); initiator 10,000 - divided by 50.
    plan = PartitionPlan(
        initiator_size=200,
        initiator_test_size=33,
        rp_count=4,
        rp_size=200,
        rp_test_size=33,
        up_count=2,
        up_clean_size=100,
        up_noise_size=100,
        up_clean_test_size=17,
        up_noise_test_size=16,
    )
    clean = synth_classification(plan.clean_total, 6, 4, seed=71)
    noise = synth_noise(plan.noise_total, 6, 4, seed=72)
    shards = partition(clean, noise, plan, seed=73)
    assert len(shards) == 7
    assert len(shards["rp4"].train) == 200
    assert len(shards["up2"].train) == 200
    assert len(shards["up2"].test) == 33


def test_relabel_uniform():
    ds = synth_classification(300, 4, 4, seed=81)
    out = relabel_uniform(ds, 4, seed=82)
    assert np.array_equal(out.X, ds.X)
    assert not np.array_equal(out.y, ds.y)


def test_noise_spec_validation():
    NoiseSpec(source="synthetic_disjoint", label_policy="uniform_random")
    with pytest.raises(ConfigError):
        NoiseSpec(source="other")
    with pytest.raises(ConfigError):
        NoiseSpec(label_policy="other")


def test_csv_dump(tmp_path):
    ds = synth_classification(10, 3, 2, seed=91)
    path = tmp_path / "dump.csv"
    to_csv(ds, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x0,x1,x2,label"
    assert len(lines) == 11


def test_default_noise_settings_degrade_clean_model():
    # The default run config's noise geometry, measured directly.
    clean = synth_classification(800, 20, 4, seed=21, class_separation=3.2)
    noise = synth_noise(
        1000, 20, 4, seed=22, shift=5.0, feature_scale=5.0,
        cluster_count=4, label_policy="cluster_consistent",
    )
    spec = ModelSpec(kind="logistic", input_dim=20, num_classes=4)
    cfg = TrainConfig(learning_rate=0.1, batch_size=32, local_epochs_per_round=25)
    params = train_local(spec, init_params(spec, np.random.default_rng(4)), clean, cfg,
                         np.random.default_rng(5))
    _, acc_clean = evaluate(spec, params, clean)
    _, acc_noise = evaluate(spec, params, noise)
    assert acc_clean > 0.9
    assert acc_noise < acc_clean - 0.3
