import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixpul.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    BatchSampler,
    DataFormatError,
    LabeledDataset,
    PUDataset,
    gaussian_mixture,
    load_csv,
    load_manifest,
    load_mnist_pair,
    load_uci,
    make_pu,
    pu_from_manifest,
    read_idx,
    sample_batch,
    save_manifest,
    standardize,
)

from conftest import data_path


def write_idx(path, magic, array, compress=False):
    arr = np.asarray(array, dtype=np.uint8)
    payload = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
    if compress:
        with gzip.open(path, "wb") as fh:
            fh.write(payload)
    else:
        path.write_bytes(payload)
    return path


def balanced(n_pos=100, n_neg=100, d=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)]
    return LabeledDataset(rng.normal(size=(n_pos + n_neg, d)), y, "toy")


class TestCsv:
    def test_two_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b,label\n1.5,2,0\n3,4,1\n")
        ds = load_csv(p)
        assert len(ds) == 2 and ds.n_features == 2
        np.testing.assert_array_equal(ds.y, [0, 1])
        np.testing.assert_array_equal(ds.x, [[1.5, 2.0], [3.0, 4.0]])

    def test_label_column_anywhere(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("cls,a\n1,7\n0,8\n")
        ds = load_csv(p, label_column="cls")
        np.testing.assert_array_equal(ds.y, [1, 0])
        np.testing.assert_array_equal(ds.x[:, 0], [7, 8])

    @pytest.mark.parametrize(
        "text",
        ["", "a,b\n1,0\n", "a,label\n1,x\n", "a,label\n1\n", "a,label\n1,2\n", "a,label\n"],
        ids=["empty", "no-label-column", "non-numeric", "short-row", "bad-label", "no-rows"],
    )
    def test_rejects_malformed(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(DataFormatError):
            load_csv(p)

    def test_standardize_uses_train_statistics(self):
        train = LabeledDataset(np.array([[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]]), np.array([0, 1, 0]))
        test = LabeledDataset(np.array([[6.0, 9.0]]), np.array([1]))
        (tr, te), scaler = standardize(train, test)
        np.testing.assert_allclose(tr.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(tr.x[:, 0].std(), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(tr.x[:, 1], 0.0)
        assert te.x[0, 0] == pytest.approx((6 - 2) / np.std([0, 2, 4]))
        assert te.x[0, 1] == 0.0
        assert scaler["constant"] == [False, True]

    def test_titanic_shape(self):
        data_path("titanic.csv")
        train, test, _ = load_uci("titanic", data_path())
        assert train.x.shape == (1540, 3)
        assert len(test) == 661
        np.testing.assert_allclose(train.x.mean(axis=0), 0.0, atol=1e-10)

    def test_spambase_shape(self):
        data_path("spambase.csv")
        train, _, _ = load_uci("spambase", data_path())
        assert train.x.shape == (3220, 57)


class TestIdx:
    def test_roundtrip_gzip(self, tmp_path):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        p = write_idx(tmp_path / "x.idx3.gz", IDX_IMAGES_MAGIC, arr, compress=True)
        np.testing.assert_array_equal(read_idx(p, IDX_IMAGES_MAGIC), arr)

    def test_bad_magic(self, tmp_path):
        p = write_idx(tmp_path / "x", IDX_LABELS_MAGIC, np.zeros(3))
        with pytest.raises(DataFormatError, match="magic"):
            read_idx(p, IDX_IMAGES_MAGIC)

    def test_truncated_payload(self, tmp_path):
        p = write_idx(tmp_path / "x", IDX_LABELS_MAGIC, np.zeros(10))
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(DataFormatError):
            read_idx(p, IDX_LABELS_MAGIC)

    def test_pair_selection_and_scaling(self, tmp_path):
        images = np.zeros((5, 2, 2), dtype=np.uint8)
        images[1, 0, 0] = 255
        labels = np.array([3, 0, 1, 0, 7], dtype=np.uint8)
        ip = write_idx(tmp_path / "i", IDX_IMAGES_MAGIC, images)
        lp = write_idx(tmp_path / "l", IDX_LABELS_MAGIC, labels)
        ds = load_mnist_pair(ip, lp, positive_digit=1, negative_digit=0)
        assert ds.x.shape == (3, 4)
        np.testing.assert_array_equal(ds.y, [0, 1, 0])
        assert ds.x[0, 0] == 1.0
        assert ds.x.max() <= 1.0 and ds.x.min() >= 0.0

    def test_same_digit_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            load_mnist_pair(tmp_path / "i", tmp_path / "l", 3, 3)

    def test_mnist_zero_vs_one_count(self):
        images = data_path("mnist", "train-images.idx3-ubyte.gz")
        labels = data_path("mnist", "train-labels.idx1-ubyte.gz")
        raw = read_idx(labels, IDX_LABELS_MAGIC)
        expected = int(np.sum(raw == 0) + np.sum(raw == 1))
        ds = load_mnist_pair(images, labels, 1, 0)
        assert len(ds) == expected == 12665
        assert ds.n_features == 784


class TestMakePu:
    def test_counting_oracle(self):
        pu = make_pu(balanced(), seed=3, n_labeled=20)
        assert pu.s.sum() == 20
        assert len(pu.unlabeled_idx) == 180
        assert pu.prior == pytest.approx(80 / 180)
        assert pu.class_frequency == pytest.approx(0.2)

    def test_class_frequency_target(self):
        pu = make_pu(balanced(), 0.2, seed=0)
        assert pu.s.sum() == 20
        assert pu.class_frequency == pytest.approx(0.2)

    def test_all_positives_labeled(self):
        ds = balanced()
        pu = make_pu(ds, 1.0, seed=0)
        np.testing.assert_array_equal(pu.s, ds.y)
        assert pu.prior == 0.0

    @pytest.mark.parametrize("kwargs", [{"class_frequency": 0.001}, {"n_labeled": 101}, {"class_frequency": 1.5}, {}])
    def test_infeasible_rejected(self, kwargs):
        with pytest.raises(ValueError):
            make_pu(balanced(), **kwargs)

    def test_labeled_never_negative(self):
        with pytest.raises(ValueError):
            PUDataset(np.zeros((2, 1)), np.array([1, 0]), np.array([0, 0]), 0.0, 1.0)

    def test_manifest_roundtrip(self, tmp_path):
        ds = balanced()
        pu = make_pu(ds, 0.3, seed=11)
        save_manifest(pu.manifest(), tmp_path / "m.json")
        again = pu_from_manifest(ds, load_manifest(tmp_path / "m.json"))
        np.testing.assert_array_equal(again.s, pu.s)
        assert again.prior == pu.prior and again.class_frequency == pu.class_frequency

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 60), st.integers(0, 2**31))
    def test_class_frequency_identity(self, n_pos, n_neg, seed):
        ds = balanced(n_pos, n_neg, d=1)
        k = int(np.random.default_rng(seed).integers(1, n_pos + 1))
        pu = make_pu(ds, seed=seed, n_labeled=k)
        n_u = len(pu.unlabeled_idx)
        assert np.all(pu.y[pu.s == 1] == 1)
        assert pu.class_frequency == pytest.approx(k / (k + pu.prior * n_u))
        assert pu.class_frequency == pytest.approx(k / n_pos)


class TestBatching:
    def test_few_positives_resampled(self, rng):
        pu = make_pu(balanced(), seed=0, n_labeled=5)
        batch = sample_batch(pu, None, 128, rng)
        assert batch.x_p.shape == (128, 3)
        assert set(batch.idx_p) <= set(pu.positive_idx)
        assert len(np.unique(batch.idx_p)) <= 5
        assert batch.x_n is None

    def test_epoch_covers_unlabeled(self, rng):
        pu = make_pu(gaussian_mixture(1000, seed=0), 0.2, seed=0)
        rn = pu.unlabeled_idx[:300]
        sampler = BatchSampler(pu, rn, 64, rng)
        seen = []
        for batch in sampler.epoch():
            assert batch.x_u.shape[0] == batch.x_p.shape[0] == batch.x_n.shape[0] == 64
            assert np.all(pu.s[batch.idx_u] == 0)
            assert np.all(pu.s[batch.idx_p] == 1)
            assert set(batch.idx_n) <= set(rn)
            seen.append(batch.idx_u)
        assert set(np.concatenate(seen)) == set(pu.unlabeled_idx)
        assert len(seen) == sampler.steps_per_epoch

    def test_rn_overlapping_positives_rejected(self, rng):
        pu = make_pu(balanced(), 0.5, seed=0)
        with pytest.raises(ValueError):
            BatchSampler(pu, pu.positive_idx[:3], 8, rng)

    def test_deterministic_given_seed(self):
        pu = make_pu(balanced(), 0.5, seed=0)
        a = sample_batch(pu, pu.unlabeled_idx[:40], 16, np.random.default_rng(5))
        b = sample_batch(pu, pu.unlabeled_idx[:40], 16, np.random.default_rng(5))
        for name in ("idx_p", "idx_n", "idx_u"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_no_positives_rejected(self, rng):
        ds = balanced()
        pu = PUDataset(ds.x, np.zeros(len(ds), dtype=np.int64), ds.y, 0.5, 0.0)
        with pytest.raises(ValueError):
            sample_batch(pu, None, 8, rng)
