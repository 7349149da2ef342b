import io
import struct

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest
from hypothesis import given, settings, strategies as st

from npstm import dataset_io as dio
from npstm.dataset_io import TensorDataset
from npstm.errors import DataError, FormatError


def random_dataset(seed, dims=(2, 3, 4), count=7):
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(count) < 0.5, 1, -1)
    return TensorDataset(rng.standard_normal((count,) + dims), labels)


class TestTensorDataset:
    def test_properties(self):
        ds = random_dataset(0)
        assert (ds.order, ds.dims, ds.count) == (3, (2, 3, 4), 7)

    @pytest.mark.parametrize("labels", [[1, 2], [1], [0, 1]])
    def test_bad_labels(self, labels):
        with pytest.raises(DataError):
            TensorDataset(np.zeros((2, 2)), labels)

    def test_nonfinite(self):
        with pytest.raises(DataError):
            TensorDataset(np.array([[np.nan]]), [1])

    def test_empty(self):
        with pytest.raises(DataError):
            TensorDataset(np.zeros((0, 2)), [])


class TestTds:
    def test_round_trip_is_byte_exact(self):
        ds = random_dataset(1)
        data = dio.tds_to_bytes(ds)
        back = dio.tds_from_bytes(data)
        assert back.same_as(ds)
        assert dio.tds_to_bytes(back) == data

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(1, 9),
           st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, dims, count, seed):
        ds = random_dataset(seed, tuple(dims), count)
        data = dio.tds_to_bytes(ds)
        assert dio.tds_from_bytes(data).same_as(ds)
        header = 4 + 4 + 4 + 4 * len(dims) + 4 + count
        assert len(data) == header + (-header) % 8 + 8 * count * int(np.prod(dims))

    def test_minimal_file(self):
        data = dio.tds_to_bytes(TensorDataset(np.array([[2.0]]), [1]))
        # magic, version, order, one dim, count = 20 bytes; one label; 3 pad bytes; one value
        assert len(data) == 32
        assert data == b"TNSD" + struct.pack("<4I", 1, 1, 1, 1) + b"\x01" + b"\0" * 3 + struct.pack("<d", 2.0)

    def test_payload_first_index_fastest(self):
        ds = TensorDataset(np.array([[[1.0, 2.0], [3.0, 4.0]]]), [-1])
        data = dio.tds_to_bytes(ds)
        assert struct.unpack("<4d", data[-32:]) == (1.0, 3.0, 2.0, 4.0)

    def test_bad_magic(self):
        data = b"XXXX" + dio.tds_to_bytes(random_dataset(2))[4:]
        with pytest.raises(FormatError) as err:
            dio.tds_from_bytes(data)
        assert err.value.offset == 0

    def test_bad_version(self):
        data = bytearray(dio.tds_to_bytes(random_dataset(2)))
        data[4] = 9
        with pytest.raises(FormatError) as err:
            dio.tds_from_bytes(bytes(data))
        assert err.value.offset == 4

    @pytest.mark.parametrize("cut", [0, 2, 6, 13, 30, -8, -1])
    def test_truncated(self, cut):
        data = dio.tds_to_bytes(random_dataset(3))
        with pytest.raises(FormatError):
            dio.tds_from_bytes(data[:cut])

    def test_trailing_bytes(self):
        with pytest.raises(FormatError):
            dio.tds_from_bytes(dio.tds_to_bytes(random_dataset(3)) + b"\0")

    def test_nonzero_padding(self):
        data = bytearray(dio.tds_to_bytes(TensorDataset(np.array([[2.0]]), [1])))
        data[22] = 1
        with pytest.raises(FormatError) as err:
            dio.tds_from_bytes(bytes(data))
        assert err.value.offset == 21

    def test_label_out_of_range(self):
        data = bytearray(dio.tds_to_bytes(TensorDataset(np.array([[2.0]]), [1])))
        data[20] = 3
        with pytest.raises(DataError):
            dio.tds_from_bytes(bytes(data))

    def test_file_round_trip(self, tmp_path):
        ds = random_dataset(4)
        dio.write_tds(ds, tmp_path / "d.tds")
        assert dio.read_tds(tmp_path / "d.tds").same_as(ds)
        buf = io.BytesIO()
        dio.write_tds(ds, buf)
        assert buf.getvalue() == (tmp_path / "d.tds").read_bytes()


class TestCsv:
    def test_fill_order(self):
        ds = dio.read_csv(io.StringIO("1,1,2,3,4\n"), (2, 2))
        assert_array_equal(ds.samples[0], [[1.0, 3.0], [2.0, 4.0]])
        assert_array_equal(ds.labels, [1])

    def test_negative_vector(self):
        ds = dio.read_csv(io.StringIO("-1,0,0\n"), (2,))
        assert_array_equal(ds.labels, [-1])
        assert_array_equal(ds.samples, [[0.0, 0.0]])

    def test_bad_label_names_line(self):
        with pytest.raises(DataError, match="line 1"):
            dio.read_csv(io.StringIO("2,1,2\n"), (2,))

    def test_row_length_names_line(self):
        with pytest.raises(DataError, match="line 3"):
            dio.read_csv(io.StringIO("1,1,2\n\n-1,1\n"), (2,))

    def test_blank_rows_skipped(self):
        ds = dio.read_csv(io.StringIO("1,1\n\n-1,2\n"), (1,))
        assert ds.count == 2

    def test_non_numeric(self):
        with pytest.raises(DataError, match="line 2"):
            dio.read_csv(io.StringIO("1,1\n-1,abc\n"), (1,))

    def test_empty(self):
        with pytest.raises(DataError):
            dio.read_csv(io.StringIO(""), (1,))

    def test_unlabeled(self):
        samples = dio.read_csv(io.StringIO("1,2,3,4\n"), (2, 2), labeled=False)
        assert_array_equal(samples[0], [[1.0, 3.0], [2.0, 4.0]])


class TestSynthetic:
    def test_degenerate_all_zero(self):
        ds = dio.generate_synthetic((3, 2), 4, 5, 0.0, 0.0, 1)
        assert_array_equal(ds.samples, 0.0)
        assert_array_equal(ds.labels, [1] * 4 + [-1] * 5)

    def test_deterministic(self):
        a = dio.generate_synthetic((4, 4), 20, 20, 3.0, 1.0, 7)
        b = dio.generate_synthetic((4, 4), 20, 20, 3.0, 1.0, 7)
        assert a.same_as(b)
        assert not a.same_as(dio.generate_synthetic((4, 4), 20, 20, 3.0, 1.0, 8))

    def test_means_are_scaled_rank_one(self):
        mu_plus, mu_minus = dio.synthetic_means((4, 4), 3.0, 7)
        for mu in (mu_plus, mu_minus):
            assert np.linalg.matrix_rank(mu) == 1
            # unit entry RMS times separation/2
            assert_allclose(np.sqrt(np.mean(mu**2)), 1.5)

    def test_noiseless_samples_equal_means(self):
        ds = dio.generate_synthetic((4, 4), 3, 2, 3.0, 0.0, 7)
        mu_plus, mu_minus = dio.synthetic_means((4, 4), 3.0, 7)
        assert_array_equal(ds.samples[:3], np.broadcast_to(mu_plus, (3, 4, 4)))
        assert_array_equal(ds.samples[3:], np.broadcast_to(mu_minus, (2, 4, 4)))

    def test_class_means_separate_along_drawn_means(self):
        ds = dio.generate_synthetic((4, 4), 20, 20, 3.0, 1.0, 7)
        mu_plus, mu_minus = dio.synthetic_means((4, 4), 3.0, 7)
        diff = mu_plus - mu_minus
        gap = np.tensordot(ds.samples[:20].mean(0) - ds.samples[20:].mean(0), diff)
        # sample mean noise has std 1/sqrt(10) along the unit direction
        assert abs(gap / np.linalg.norm(diff) - np.linalg.norm(diff)) < 4 / np.sqrt(10)

    @pytest.mark.parametrize("args", [((2,), 0, 1, 1.0, 1.0), ((2,), 1, 1, -1.0, 1.0),
                                      ((0,), 1, 1, 1.0, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            dio.generate_synthetic(*args, seed=0)


class TestFolds:
    def test_smallest_stratified(self):
        ds = TensorDataset(np.zeros((4, 1)), [1, 1, -1, -1])
        plan = dio.make_folds(ds, 2)
        for f in range(2):
            assert sorted(ds.labels[plan.test_indices(0, f)]) == [-1, 1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 40), st.integers(0, 40), st.integers(2, 10), st.integers(1, 3),
           st.integers(0, 10**6))
    def test_partition_and_stratification(self, n_pos, n_neg, k, repeats, seed):
        labels = np.array([1] * n_pos + [-1] * n_neg)
        rng = np.random.default_rng(seed)
        labels = labels[rng.permutation(labels.size)]
        if k > labels.size:
            return
        with np.testing.suppress_warnings() as sup:
            sup.filter(RuntimeWarning)
            plan = dio.make_folds(labels, k, repeats, seed)
        for r in range(repeats):
            folds = [plan.test_indices(r, f) for f in range(k)]
            assert_array_equal(np.sort(np.concatenate(folds)), np.arange(labels.size))
            sizes = [len(f) for f in folds]
            assert max(sizes) - min(sizes) <= 1
            for cls, total in ((1, n_pos), (-1, n_neg)):
                counts = np.array([np.sum(labels[f] == cls) for f in folds])
                assert np.all(np.abs(counts - total / k) < 1)
            for f in range(k):
                train = plan.train_indices(r, f)
                assert np.intersect1d(train, folds[f]).size == 0
                assert train.size + folds[f].size == labels.size

    def test_repeats_differ_but_reproduce(self):
        labels = np.array([1] * 10 + [-1] * 10)
        plan = dio.make_folds(labels, 5, 2, 3)
        again = dio.make_folds(labels, 5, 2, 3)
        flat = [np.concatenate(a) for a in plan.assignments]
        assert not np.array_equal(flat[0], flat[1])
        for a, b in zip(plan.assignments, again.assignments):
            for x, y in zip(a, b):
                assert_array_equal(x, y)

    def test_too_many_folds(self):
        with pytest.raises(ValueError):
            dio.make_folds(np.array([1, -1, 1]), 4)

    def test_small_class_warns(self):
        with pytest.warns(RuntimeWarning):
            dio.make_folds(np.array([1, -1, -1, -1]), 2)
