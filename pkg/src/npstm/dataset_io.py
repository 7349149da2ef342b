"""Labeled tensor datasets: binary persistence, CSV import, synthetic data
and stratified fold plans.

TDS layout (little-endian)::

    "TNSD" | u32 version=1 | u32 order | order x u32 dims | u32 count
    | count x i8 labels | zero padding to a multiple of 8 bytes
    | count * prod(dims) f64 values

Values are stored sample by sample, each sample first-index-fastest.
"""
import csv
from dataclasses import dataclass
import io
import struct
import warnings

import numpy as np

from .errors import DataError, FormatError

TDS_MAGIC = b"TNSD"
TDS_VERSION = 1


@dataclass(eq=False)
class TensorDataset:
    """Stack of samples ``(count, *dims)`` with labels in {-1, +1}."""

    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        labels = np.asarray(self.labels)
        if self.samples.ndim < 2 or self.samples.shape[0] < 1:
            raise DataError("a dataset needs at least one sample with at least one mode")
        if 0 in self.samples.shape:
            raise DataError("dimensions must be positive")
        if labels.shape != (self.samples.shape[0],):
            raise DataError(f"{labels.shape[0] if labels.ndim else 0} labels for {self.samples.shape[0]} samples")
        if not np.all((labels == 1) | (labels == -1)):
            raise DataError("labels must be +1 or -1")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("samples contain non-finite values")
        self.labels = labels.astype(np.int8)

    @property
    def dims(self):
        return self.samples.shape[1:]

    @property
    def order(self):
        return self.samples.ndim - 1

    @property
    def count(self):
        return self.samples.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return TensorDataset(self.samples[indices], self.labels[indices])

    def same_as(self, other):
        """Bitwise equality of labels and sample payloads."""
        return (self.samples.shape == other.samples.shape
                and np.array_equal(self.labels, other.labels)
                and self.samples.tobytes() == other.samples.tobytes())


def _padding(n):
    return (-n) % 8


def tds_to_bytes(ds):
    header = [TDS_MAGIC, struct.pack("<II", TDS_VERSION, ds.order),
              struct.pack(f"<{ds.order}I", *ds.dims), struct.pack("<I", ds.count),
              ds.labels.astype("<i1").tobytes()]
    size = sum(len(part) for part in header)
    header.append(b"\0" * _padding(size))
    # per-sample F-order == transpose-then-C-order of the per-sample axes
    payload = np.asarray(ds.samples, dtype="<f8")
    axes = (0,) + tuple(range(ds.order, 0, -1))
    header.append(np.ascontiguousarray(payload.transpose(axes)).tobytes())
    return b"".join(header)


def tds_from_bytes(data):
    data = bytes(data)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated stream while reading {what}", pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != TDS_MAGIC:
        raise FormatError("bad magic, expected TNSD", 0)
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != TDS_VERSION:
        raise FormatError(f"unsupported dataset version {version}", 4)
    start = pos
    order = struct.unpack("<I", take(4, "order"))[0]
    if order < 1:
        raise FormatError("order must be positive", start)
    start = pos
    dims = struct.unpack(f"<{order}I", take(4 * order, "dims"))
    if min(dims) < 1:
        raise FormatError("dimensions must be positive", start)
    start = pos
    count = struct.unpack("<I", take(4, "count"))[0]
    if count < 1:
        raise FormatError("count must be positive", start)
    labels = np.frombuffer(take(count, "labels"), dtype="<i1")
    pad_start = pos
    if any(take(_padding(pos), "padding")):
        raise FormatError("nonzero padding bytes", pad_start)
    n_values = count * int(np.prod(dims))
    values = np.frombuffer(take(8 * n_values, "values"), dtype="<f8")
    if pos != len(data):
        raise FormatError("trailing bytes after dataset", pos)
    bad = np.flatnonzero((labels != 1) & (labels != -1))
    if bad.size:
        raise DataError(f"label {labels[bad[0]]} of sample {bad[0]} is not +1 or -1")
    reversed_dims = tuple(reversed(dims))
    samples = values.reshape((count,) + reversed_dims).transpose((0,) + tuple(range(order, 0, -1)))
    return TensorDataset(np.array(samples, dtype=np.float64), labels.astype(np.int8))


def write_tds(ds, sink):
    """Write ``ds`` to a path or binary file object."""
    data = tds_to_bytes(ds)
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        with open(sink, "wb") as fh:
            fh.write(data)


def read_tds(source):
    if hasattr(source, "read"):
        return tds_from_bytes(source.read())
    with open(source, "rb") as fh:
        return tds_from_bytes(fh.read())


def _csv_rows(source):
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        yield from enumerate(csv.reader(source), start=1)
    else:
        with open(source, newline="", encoding="utf-8") as fh:
            yield from enumerate(csv.reader(fh), start=1)


def _parse_label(text, line):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: label {text!r} is not a number") from None
    if value not in (1.0, -1.0):
        raise DataError(f"line {line}: label {text!r} is not +1 or -1")
    return int(value)


def _parse_values(cells, line):
    try:
        return [float(x) for x in cells]
    except ValueError as exc:
        raise DataError(f"line {line}: {exc}") from None


def read_csv(source, dims, labeled=True):
    """Read one sample per row, values filling the tensor first-index-fastest.

    With ``labeled`` (the default) each row starts with a +1/-1 label and a
    :class:`TensorDataset` is returned; otherwise rows hold values only and
    the sample stack ``(n, *dims)`` is returned.  Blank rows are skipped.
    """
    dims = tuple(int(d) for d in dims)
    if not dims or min(dims) < 1:
        raise DataError("dims must be positive")
    size = int(np.prod(dims))
    width = size + 1 if labeled else size
    labels, rows = [], []
    for line, cells in _csv_rows(source):
        cells = [c.strip() for c in cells]
        if not any(cells):
            continue
        if labeled:
            labels.append(_parse_label(cells[0], line))
        if len(cells) != width:
            raise DataError(f"line {line}: expected {width} fields, got {len(cells)}")
        rows.append(_parse_values(cells[1:] if labeled else cells, line))
    if not rows:
        raise DataError("no samples in CSV input")
    flat = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(flat)):
        raise DataError("CSV contains non-finite values")
    samples = np.stack([row.reshape(dims, order="F") for row in flat])
    if labeled:
        return TensorDataset(samples, np.asarray(labels))
    return samples


def _unit_rms_rank_one(dims, rng):
    """Rank-one tensor whose factor ``u_j`` has norm ``sqrt(I_j)``.

    Entries then have unit root-mean-square, so a separation is measured on
    the same scale as unit-variance noise.
    """
    vectors = []
    for d in dims:
        u = rng.standard_normal(d)
        norm = np.linalg.norm(u)
        vectors.append(u * (np.sqrt(d) / norm) if norm > 0 else np.ones(d))
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def synthetic_means(dims, separation, seed):
    """Class means ``(mu_plus, mu_minus)`` drawn by :func:`generate_synthetic`."""
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    r_plus = _unit_rms_rank_one(dims, rng)
    r_minus = _unit_rms_rank_one(dims, rng)
    return 0.5 * separation * r_plus, -0.5 * separation * r_minus


def generate_synthetic(dims, m1, m2, separation, noise, seed):
    """Two-class Gaussian data around rank-one means.

    ``mu_+ = (separation/2) r_+`` and ``mu_- = -(separation/2) r_-`` with two
    independently drawn rank-one directions of unit entry RMS.  Each sample
    is its class mean plus ``noise`` times i.i.d. standard normal entries.
    Positives come first.
    """
    dims = tuple(int(d) for d in dims)
    if m1 < 1 or m2 < 1:
        raise ValueError("need m1 >= 1 and m2 >= 1")
    if not separation >= 0 or not noise >= 0:
        raise ValueError("separation and noise must be nonnegative")
    if not dims or min(dims) < 1:
        raise ValueError("dims must be positive")
    rng = np.random.default_rng(seed)
    r_plus = _unit_rms_rank_one(dims, rng)
    r_minus = _unit_rms_rank_one(dims, rng)
    mu_plus, mu_minus = 0.5 * separation * r_plus, -0.5 * separation * r_minus
    pos = mu_plus + noise * rng.standard_normal((m1,) + dims)
    neg = mu_minus + noise * rng.standard_normal((m2,) + dims)
    labels = np.concatenate([np.ones(m1, dtype=np.int8), -np.ones(m2, dtype=np.int8)])
    return TensorDataset(np.concatenate([pos, neg]), labels)


@dataclass(frozen=True)
class FoldPlan:
    """``assignments[r][f]`` holds the sorted test indices of fold f in repeat r."""

    folds: int
    repeats: int
    seed: int
    assignments: tuple

    def test_indices(self, repeat, fold):
        return self.assignments[repeat][fold]

    def train_indices(self, repeat, fold):
        others = [a for i, a in enumerate(self.assignments[repeat]) if i != fold]
        return np.sort(np.concatenate(others)) if others else np.array([], dtype=np.intp)


def fold_rng(seed, repeat):
    return np.random.default_rng(seed * 1_000_003 + repeat)


def make_folds(ds, k, repeats=1, seed=0):
    """Stratified k-fold plan, reshuffled within each class for every repeat.

    Shuffled positives are dealt to folds round-robin starting at fold 0;
    negatives continue the deal where the positives stopped, which keeps
    fold sizes within one of each other as well.
    """
    labels = np.asarray(ds.labels if hasattr(ds, "labels") else ds)
    count = labels.shape[0]
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > count:
        raise ValueError(f"{k} folds requested for {count} samples")
    if repeats < 1:
        raise ValueError("need at least one repeat")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    pos = np.flatnonzero(labels > 0)
    neg = np.flatnonzero(labels < 0)
    if min(pos.size, neg.size) < k:
        warnings.warn(f"a class has fewer than {k} members; some folds miss it",
                      RuntimeWarning, stacklevel=2)
    plan = []
    for r in range(repeats):
        rng = fold_rng(seed, r)
        fold_of = np.empty(count, dtype=np.intp)
        fold_of[rng.permutation(pos)] = np.arange(pos.size) % k
        fold_of[rng.permutation(neg)] = (pos.size + np.arange(neg.size)) % k
        plan.append(tuple(np.flatnonzero(fold_of == f) for f in range(k)))
    return FoldPlan(folds=k, repeats=repeats, seed=seed, assignments=tuple(plan))
