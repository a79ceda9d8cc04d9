"""Dataset generators, stratified splitting, CSV ingestion."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from bdkd.data import (
    Dataset,
    gen_gaussian_blobs,
    gen_spirals,
    load_csv,
    save_csv,
    split,
    standardize,
)

FIXTURES = Path(__file__).parent / "fixtures"


class TestBlobs:
    def test_zero_spread_is_separable_point_classes(self):
        ds = gen_gaussian_blobs(3, 10, dim=2, spread=0.0, seed=0)
        for k in range(3):
            cluster = ds.features[ds.labels == k]
            np.testing.assert_array_equal(cluster, np.tile(cluster[0], (10, 1)))
        # Distinct class means.
        means = {tuple(ds.features[ds.labels == k][0]) for k in range(3)}
        assert len(means) == 3

    def test_same_seed_is_bitwise_identical(self):
        a = gen_gaussian_blobs(3, 20, spread=1.5, seed=42)
        b = gen_gaussian_blobs(3, 20, spread=1.5, seed=42)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_shapes_and_balance(self):
        ds = gen_gaussian_blobs(3, 100, dim=2, spread=1.0, seed=7)
        assert len(ds) == 300 and ds.num_classes == 3
        np.testing.assert_array_equal(np.bincount(ds.labels), [100, 100, 100])


class TestSpirals:
    def test_same_seed_is_bitwise_identical(self):
        a = gen_spirals(3, 50, noise=0.3, seed=5)
        b = gen_spirals(3, 50, noise=0.3, seed=5)
        np.testing.assert_array_equal(a.features, b.features)

    def test_shapes_and_balance(self):
        ds = gen_spirals(4, 25, noise=0.1, seed=1)
        assert len(ds) == 100 and ds.num_features == 2
        np.testing.assert_array_equal(np.bincount(ds.labels), [25] * 4)

    def test_arms_differ(self):
        ds = gen_spirals(2, 30, noise=0.0, seed=0)
        arm0 = ds.features[ds.labels == 0]
        arm1 = ds.features[ds.labels == 1]
        assert np.abs(arm0 - arm1).max() > 0.5


class TestSplit:
    def test_stratified_counts(self):
        ds = gen_gaussian_blobs(2, 50, spread=1.0, seed=3)  # 100 samples
        train, val = split(ds, val_fraction=0.2, seed=0)
        assert len(train) == 80 and len(val) == 20
        np.testing.assert_array_equal(np.bincount(train.labels), [40, 40])
        np.testing.assert_array_equal(np.bincount(val.labels), [10, 10])
        assert train.split == "train" and val.split == "val"

    def test_same_seed_same_split(self):
        ds = gen_spirals(3, 40, noise=0.2, seed=9)
        t1, v1 = split(ds, 0.25, seed=4)
        t2, v2 = split(ds, 0.25, seed=4)
        np.testing.assert_array_equal(t1.features, t2.features)
        np.testing.assert_array_equal(v1.labels, v2.labels)

    def test_partition_is_disjoint_and_complete(self):
        ds = gen_gaussian_blobs(3, 30, spread=2.0, seed=8)
        train, val = split(ds, 0.3, seed=1)
        combined = np.vstack([train.features, val.features])
        assert combined.shape[0] == len(ds)
        # Every original row appears exactly once across the two splits.
        original = {tuple(row) for row in ds.features}
        recombined = [tuple(row) for row in combined]
        assert len(set(recombined)) == len(recombined)
        assert set(recombined) == original

    def test_tiny_class_rejected(self):
        ds = Dataset(features=np.zeros((3, 2)), labels=np.array([0, 0, 1]), num_classes=2)
        with pytest.raises(ValueError, match="fewer than 2"):
            split(ds, 0.5, seed=0)


class TestStandardize:
    def test_train_statistics_applied_to_val(self):
        train = Dataset(features=np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]),
                        labels=np.array([0, 1, 0]), num_classes=2)
        val = Dataset(features=np.array([[2.0, 3.0]]), labels=np.array([1]),
                      num_classes=2, split="val")
        train_z, val_z = standardize(train, val)
        np.testing.assert_allclose(train_z.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train_z.features.std(axis=0), 1.0, atol=1e-12)
        # The val row sits at the train mean, so it lands on zero.
        np.testing.assert_allclose(val_z.features, [[0.0, 0.0]], atol=1e-12)

    def test_constant_column_maps_to_zero(self):
        train = Dataset(features=np.array([[7.0, 1.0], [7.0, 2.0], [7.0, 3.0]]),
                        labels=np.array([0, 1, 0]), num_classes=2)
        (train_z,) = standardize(train)
        assert np.abs(train_z.features[:, 0]).max() < 1e-6


class TestCsv:
    def test_three_row_fixture(self):
        ds = load_csv(FIXTURES / "tiny.csv", label_column="label")
        np.testing.assert_array_equal(ds.features, [[1.5, -2.0], [0.25, 3.5], [-1.0, 0.0]])
        np.testing.assert_array_equal(ds.labels, [0, 1, 2])
        assert ds.num_classes == 3

    def test_round_trip(self, tmp_path):
        ds = gen_gaussian_blobs(3, 10, spread=1.3, seed=2)
        path = tmp_path / "blob.csv"
        save_csv(ds, path)
        back = load_csv(path, label_column="label")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,label\n1.0,0\noops,1\n")
        with pytest.raises(ValueError, match=r"bad\.csv:3"):
            load_csv(path, label_column="label")

    def test_wrong_field_count_reports_line_number(self, tmp_path):
        path = tmp_path / "bad2.csv"
        path.write_text("x0,x1,label\n1.0,2.0,0\n1.0,1\n")
        with pytest.raises(ValueError, match=r"bad2\.csv:3"):
            load_csv(path, label_column="label")

    def test_unknown_label_column(self):
        with pytest.raises(ValueError, match="unknown label column"):
            load_csv(FIXTURES / "tiny.csv", label_column="target")


class TestDatasetValidation:
    def test_rejects_nan_features(self):
        with pytest.raises(ValueError, match="NaN"):
            Dataset(features=np.array([[np.nan, 1.0]]), labels=np.array([0]), num_classes=2)

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValueError, match="labels"):
            Dataset(features=np.zeros((2, 2)), labels=np.array([0, 5]), num_classes=2)
