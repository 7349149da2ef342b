"""Accuracy, ranks, the Friedman test, the Nemenyi critical difference and
report emission for comparing classifiers over several datasets.
"""
import csv
from dataclasses import dataclass
import io
import math

import numpy as np
from scipy import special, stats

# Two-tailed Nemenyi critical values q_alpha for K = 2..10 classifiers
# (studentized range statistic divided by sqrt(2)); Demsar (2006), Table 5a.
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}

TIE_TOL = 1e-9


def accuracy(tc, fc):
    """``tc / (tc + fc)``."""
    if tc < 0 or fc < 0 or tc + fc < 1:
        raise ValueError("need nonnegative counts with tc + fc >= 1")
    return tc / (tc + fc)


def accuracy_of(predicted, actual):
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError("prediction and label arrays differ in shape")
    tc = int(np.sum(predicted == actual))
    return accuracy(tc, actual.size - tc)


def rank_row(values, higher_is_better=True):
    """Average ranks with K for the best value and 1 for the worst.

    With ``higher_is_better=False`` (e.g. run time) the smallest value is
    the best.  Tied values share the mean of the positions they occupy.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need at least two values to rank")
    return stats.rankdata(values if higher_is_better else -values, method="average")


def chi2_sf(x, dof):
    """Upper-tail chi-square probability, the regularized gamma ``Q(dof/2, x/2)``."""
    if x <= 0:
        return 1.0
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def friedman_chi2(avg_ranks, n_datasets):
    """``chi2_F = 12N/(K(K+1)) (sum R_j^2 - K(K+1)^2/4)`` with dof and p-value."""
    R = np.asarray(avg_ranks, dtype=np.float64)
    K = R.size
    if K < 2 or n_datasets < 1:
        raise ValueError("need K >= 2 classifiers and N >= 1 datasets")
    chi2 = 12.0 * n_datasets / (K * (K + 1)) * (np.dot(R, R) - K * (K + 1) ** 2 / 4.0)
    chi2 = max(float(chi2), 0.0)
    return chi2, K - 1, chi2_sf(chi2, K - 1)


def nemenyi_cd(k, n_datasets, alpha=0.05):
    """``q_alpha(K) sqrt(K(K+1) / (6N))``."""
    if alpha not in NEMENYI_Q:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if not 2 <= k <= 10:
        raise ValueError("the q table covers 2 to 10 classifiers")
    if n_datasets < 1:
        raise ValueError("need at least one dataset")
    return NEMENYI_Q[alpha][k - 2] * math.sqrt(k * (k + 1) / (6.0 * n_datasets))


@dataclass
class ResultTable:
    """Per (dataset, classifier) mean and std of accuracy and run time."""

    datasets: list
    classifiers: list
    acc_mean: np.ndarray
    acc_std: np.ndarray
    time_mean: np.ndarray
    time_std: np.ndarray

    def __post_init__(self):
        shape = (len(self.datasets), len(self.classifiers))
        for name in ("acc_mean", "acc_std", "time_mean", "time_std"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(shape)
            setattr(self, name, arr)
        if np.any(self.acc_mean < 0) or np.any(self.acc_mean > 1):
            raise ValueError("accuracies must lie in [0, 1]")
        if np.any(self.acc_std < 0) or np.any(self.time_std < 0):
            raise ValueError("standard deviations must be nonnegative")

    @classmethod
    def from_runs(cls, runs):
        """Build from ``{(dataset, classifier): (accuracies, times)}``, keeping
        first-seen order of names."""
        datasets, classifiers = [], []
        for d, c in runs:
            if d not in datasets:
                datasets.append(d)
            if c not in classifiers:
                classifiers.append(c)
        shape = (len(datasets), len(classifiers))
        cells = {k: np.zeros(shape) for k in ("am", "as", "tm", "ts")}
        for (d, c), (accs, times) in runs.items():
            i, j = datasets.index(d), classifiers.index(c)
            cells["am"][i, j] = np.mean(accs)
            cells["as"][i, j] = np.std(accs)
            cells["tm"][i, j] = np.mean(times)
            cells["ts"][i, j] = np.std(times)
        return cls(datasets, classifiers, cells["am"], cells["as"], cells["tm"], cells["ts"])


@dataclass
class RankTable:
    datasets: list
    classifiers: list
    ranks: np.ndarray

    @property
    def average(self):
        return self.ranks.mean(axis=0)


def rank_table(table, higher_is_better=True, metric="accuracy"):
    values = table.acc_mean if metric == "accuracy" else table.time_mean
    ranks = np.stack([rank_row(row, higher_is_better) for row in values])
    return RankTable(list(table.datasets), list(table.classifiers), ranks)


def wtl(table, reference):
    """Wins, ties and losses of ``reference`` against every other column."""
    if reference not in table.classifiers:
        raise KeyError(f"unknown classifier {reference!r}")
    ref = table.acc_mean[:, table.classifiers.index(reference)]
    out = {}
    for j, name in enumerate(table.classifiers):
        if name == reference:
            continue
        diff = ref - table.acc_mean[:, j]
        out[name] = (int(np.sum(diff > TIE_TOL)), int(np.sum(np.abs(diff) <= TIE_TOL)),
                     int(np.sum(diff < -TIE_TOL)))
    return out


@dataclass(frozen=True)
class StatsSummary:
    chi2: float
    dof: int
    p_value: float
    cd: float
    alpha: float
    n_datasets: int


def summarize(ranks, alpha=0.05, n_datasets=None):
    """Friedman and Nemenyi figures for a rank table, or ``None`` if K < 2."""
    k = len(ranks.classifiers)
    if k < 2:
        return None
    n = n_datasets or len(ranks.datasets)
    chi2, dof, p = friedman_chi2(ranks.average, n)
    return StatsSummary(chi2, dof, p, nemenyi_cd(k, n, alpha), alpha, n)


CSV_HEADER = ("dataset", "classifier", "acc_mean", "acc_std", "time_mean", "time_std")


def _csv_report(table, ranks, summary, reference, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, d in enumerate(table.datasets):
        for j, c in enumerate(table.classifiers):
            writer.writerow([d, c, repr(float(table.acc_mean[i, j])), repr(float(table.acc_std[i, j])),
                             repr(float(table.time_mean[i, j])), repr(float(table.time_std[i, j]))])
    if ranks is not None:
        out.write("\n")
        writer.writerow(["dataset"] + list(ranks.classifiers))
        for d, row in zip(ranks.datasets, ranks.ranks):
            writer.writerow([d] + [repr(float(r)) for r in row])
        writer.writerow(["average"] + [repr(float(r)) for r in ranks.average])
    out.write("\n")
    writer.writerow(["statistic", "value"])
    if summary is None:
        writer.writerow(["note", "statistics omitted: fewer than two classifiers"])
    else:
        for key in ("chi2", "dof", "p_value", "cd", "alpha", "n_datasets"):
            writer.writerow([key, repr(getattr(summary, key))])
    if reference is not None and len(table.classifiers) > 1:
        out.write("\n")
        writer.writerow(["reference", "classifier", "wins", "ties", "losses"])
        for name, (w, t, l) in wtl(table, reference).items():
            writer.writerow([reference, name, w, t, l])


def _md_row(cells):
    return "| " + " | ".join(cells) + " |\n"


def _markdown_report(table, ranks, summary, reference, out):
    out.write("## Accuracy (mean ± std) and time in seconds (mean ± std)\n\n")
    out.write(_md_row(["Dataset"] + list(table.classifiers)))
    out.write(_md_row(["---"] * (len(table.classifiers) + 1)))
    for i, d in enumerate(table.datasets):
        cells = [f"{table.acc_mean[i, j]:.4f} ± {table.acc_std[i, j]:.4f} "
                 f"({table.time_mean[i, j]:.4f} ± {table.time_std[i, j]:.4f})"
                 for j in range(len(table.classifiers))]
        out.write(_md_row([d] + cells))
    if reference is not None and len(table.classifiers) > 1:
        results = wtl(table, reference)
        cells = ["/".join(map(str, results[c])) if c in results else "-"
                 for c in table.classifiers]
        out.write(_md_row([f"W/T/L vs {reference}"] + cells))
    if ranks is not None:
        out.write("\n## Ranks\n\n")
        out.write(_md_row(["Dataset"] + list(ranks.classifiers)))
        out.write(_md_row(["---"] * (len(ranks.classifiers) + 1)))
        for d, row in zip(ranks.datasets, ranks.ranks):
            out.write(_md_row([d] + [f"{r:.4f}" for r in row]))
        out.write(_md_row(["Average"] + [f"{r:.4f}" for r in ranks.average]))
    out.write("\n## Statistics\n\n")
    if summary is None:
        out.write("Statistics omitted: fewer than two classifiers.\n")
    else:
        out.write(f"Friedman chi2_F = {summary.chi2:.4f} (dof {summary.dof}, N = {summary.n_datasets}), "
                  f"p = {summary.p_value:.4g}\n\n")
        out.write(f"Nemenyi CD (alpha = {summary.alpha}) = {summary.cd:.4f}\n")


def emit_report(table, ranks, summary, sink, fmt="csv", reference=None):
    """Write the result table, ranks, test statistics and W/T/L to ``sink``.

    ``sink`` is a text stream or a path.  ``reference`` names the column the
    W/T/L tallies are computed for (defaults to the first classifier).
    """
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    if reference is None and table.classifiers:
        reference = table.classifiers[0]
    buf = io.StringIO()
    (_csv_report if fmt == "csv" else _markdown_report)(table, ranks, summary, reference, buf)
    if hasattr(sink, "write"):
        sink.write(buf.getvalue())
    else:
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
