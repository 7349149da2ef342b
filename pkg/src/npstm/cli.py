"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 numerical
failure.
"""
import argparse
import csv
import itertools
import sys
import time
import warnings

import numpy as np

from . import dataset_io, evalstats, ldm, svm
from .errors import DataError, FormatError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Default grid: {2^-5, 2^-3, ..., 2^7}
THETA = tuple(2.0 ** e for e in range(-5, 8, 2))
GRID_PAIRS = {"c12": ("c1", "c2"), "c34": ("c3", "c4"),
              "l12": ("lambda1", "lambda2"), "l34": ("lambda3", "lambda4")}
CLASSIFIERS = ("ldm-npstm", "svm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _dims(text):
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}, expected e.g. 4,4") from None
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError("dims must be positive")
    return dims


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _add_hyper(p):
    g = p.add_argument_group("model")
    for name in ("c1", "c2", "c3", "c4"):
        g.add_argument(f"--{name}", type=float, default=1.0)
    for i in range(1, 5):
        g.add_argument(f"--l{i}", type=float, default=1.0, dest=f"lambda{i}")
    g.add_argument("--rank", type=int, default=1)
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--max-iter", type=int, default=5000, dest="max_outer")
    g.add_argument("--ridge", type=float, default=1e-8)
    g.add_argument("--seed", type=int, default=0)


def _add_eval(p):
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--svm-c", type=float, default=1.0, dest="svm_c")
    p.add_argument("--no-time", action="store_true",
                   help="report zero times so output is byte-reproducible")
    p.add_argument("--grid", action="store_true",
                   help="select hyperparameters per fold by inner cross-validation")
    p.add_argument("--grid-values", type=_float_list, default=THETA)
    p.add_argument("--grid-params", default="c12,c34,l12,l34",
                   help="tied pairs to vary, subset of c12,c34,l12,l34")
    p.add_argument("--inner-folds", type=int, default=3)


def _hyper(args):
    try:
        return ldm.Hyperparams(
            c1=args.c1, c2=args.c2, c3=args.c3, c4=args.c4,
            lambda1=args.lambda1, lambda2=args.lambda2, lambda3=args.lambda3,
            lambda4=args.lambda4, rank=args.rank, eps=args.eps, max_outer=args.max_outer,
            ridge=args.ridge, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser():
    parser = _Parser(prog="npstm", description="Tensor classification with LDM-NPSTM.",
                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic two-class dataset", allow_abbrev=False)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--m1", type=int, required=True)
    p.add_argument("--m2", type=int, required=True)
    p.add_argument("--sep", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("convert", help="convert a labeled CSV file to TDS", allow_abbrev=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a TDS file", allow_abbrev=False)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output model path")
    _add_hyper(p)

    p = sub.add_parser("predict", help="classify samples with a trained model", allow_abbrev=False)
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="TDS file")
    src.add_argument("--csv", help="CSV file, read with --dims")
    p.add_argument("--dims", type=_dims)
    p.add_argument("--unlabeled", action="store_true", help="CSV rows carry no label")
    p.add_argument("--out")

    p = sub.add_parser("crossval", help="repeated stratified k-fold evaluation", allow_abbrev=False)
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", choices=CLASSIFIERS, default="ldm-npstm")
    _add_hyper(p)
    _add_eval(p)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="compare classifiers over datasets", allow_abbrev=False)
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--classifiers", default="ldm-npstm,svm")
    _add_hyper(p)
    _add_eval(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--stats-n", type=int, dest="stats_n")
    p.add_argument("--reference")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.add_argument("--out")

    p = sub.add_parser("stats", help="ranks, Friedman test and Nemenyi CD from a CSV table",
                       allow_abbrev=False)
    p.add_argument("--input", required=True,
                   help="CSV with header 'dataset,<classifier>...' and one row per dataset")
    p.add_argument("--lower-is-better", action="store_true")
    p.add_argument("--input-ranks", action="store_true",
                   help="cells are already ranks; their column means are used")
    p.add_argument("--stats-n", type=int, dest="stats_n")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    return parser


class _Output:
    """stdout or a file opened for the duration of a command."""

    def __init__(self, path):
        self.path = path
        self.fh = None

    def __enter__(self):
        self.fh = open(self.path, "w", encoding="utf-8", newline="") if self.path else sys.stdout
        return self.fh

    def __exit__(self, *exc):
        if self.path:
            self.fh.close()


def cmd_synth(args):
    try:
        ds = dataset_io.generate_synthetic(args.dims, args.m1, args.m2, args.sep, args.noise,
                                           args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset_io.write_tds(ds, args.out)
    dims = "x".join(map(str, ds.dims))
    print(f"wrote {ds.count} samples ({args.m1} positive, {args.m2} negative), dims {dims}, to {args.out}")
    return EXIT_OK


def cmd_convert(args):
    ds = dataset_io.read_csv(args.csv, args.dims)
    dataset_io.write_tds(ds, args.out)
    print(f"wrote {ds.count} samples to {args.out}")
    return EXIT_OK


def _training_set(ds):
    if not (np.any(ds.labels > 0) and np.any(ds.labels < 0)):
        raise DataError("training data need samples of both classes")
    return ldm.TrainingSet.from_labeled(ds.samples, ds.labels)


def cmd_train(args):
    hyper = _hyper(args)
    ds = dataset_io.read_tds(args.data)
    model = ldm.train(_training_set(ds), hyper)
    ldm.save_model(model, args.model)
    obj1 = model.history.objectives[1][-1]
    obj2 = model.history.objectives[2][-1]
    print(f"outer_iters={model.outer_iters} converged={str(model.converged).lower()}")
    print(f"objective1={obj1!r} objective2={obj2!r}")
    print(f"saved model to {args.model}")
    return EXIT_OK


def cmd_predict(args):
    model = ldm.load_model(args.model)
    labels = None
    if args.data:
        ds = dataset_io.read_tds(args.data)
        samples, labels = ds.samples, ds.labels
    else:
        if args.dims is None:
            raise UsageError("--csv needs --dims")
        if args.unlabeled:
            samples = dataset_io.read_csv(args.csv, args.dims, labeled=False)
        else:
            ds = dataset_io.read_csv(args.csv, args.dims)
            samples, labels = ds.samples, ds.labels
    if samples.shape[1:] != tuple(model.dims):
        raise DataError(f"sample dims {tuple(samples.shape[1:])} do not match model dims "
                        f"{tuple(model.dims)}")
    d1, d2 = ldm.decision_distances(model, samples)
    pred = np.where(d1 <= d2, 1, -1)
    with _Output(args.out) as out:
        out.write("index,label,d1,d2\n")
        for i, (p, a, b) in enumerate(zip(pred, d1, d2)):
            out.write(f"{i},{int(p):+d},{float(a)!r},{float(b)!r}\n")
        if labels is not None:
            out.write(f"ACCU={evalstats.accuracy_of(pred, labels)!r}\n")
    return EXIT_OK


def _fit_predict(name, train, test_samples, hyper, svm_c):
    """Train ``name`` on ``train`` and label ``test_samples``."""
    if name == "svm":
        model = svm.train_svm(svm.as_vectors(train.samples), train.labels, svm_c)
        return svm.predict_svm(model, svm.as_vectors(test_samples))
    model = ldm.train(_training_set(train), hyper)
    return ldm.predict(model, test_samples)


def _grid_candidates(name, hyper, svm_c, args):
    values = args.grid_values
    if name == "svm":
        return [(hyper, c) for c in values]
    keys = [k.strip() for k in args.grid_params.split(",") if k.strip()]
    unknown = [k for k in keys if k not in GRID_PAIRS]
    if unknown:
        raise UsageError(f"unknown grid parameters {unknown}; choose from {sorted(GRID_PAIRS)}")
    out = []
    base = {f: getattr(hyper, f) for f in hyper.__dataclass_fields__}
    for combo in itertools.product(values, repeat=len(keys)):
        fields = dict(base)
        for key, v in zip(keys, combo):
            for f in GRID_PAIRS[key]:
                fields[f] = v
        out.append((ldm.Hyperparams(**fields), svm_c))
    return out


def _select(name, train, hyper, svm_c, args):
    """Pick the grid point with the best inner cross-validated accuracy."""
    k = min(args.inner_folds, int(min(np.sum(train.labels > 0), np.sum(train.labels < 0))))
    if k < 2:
        return hyper, svm_c
    plan = dataset_io.make_folds(train, k, 1, hyper.seed)
    best, best_acc = None, -1.0
    for cand_hyper, cand_c in _grid_candidates(name, hyper, svm_c, args):
        accs = []
        for f in range(k):
            tr = train.subset(plan.train_indices(0, f))
            te = train.subset(plan.test_indices(0, f))
            accs.append(evalstats.accuracy_of(
                _fit_predict(name, tr, te.samples, cand_hyper, cand_c), te.labels))
        if np.mean(accs) > best_acc:
            best, best_acc = (cand_hyper, cand_c), float(np.mean(accs))
    return best


def run_crossval(ds, name, hyper, args):
    """Accuracies and wall times over every (repeat, fold) of the plan."""
    if args.folds < 2 or args.folds > ds.count:
        raise UsageError(f"--folds must be between 2 and {ds.count}")
    if args.repeats < 1:
        raise UsageError("--repeats must be positive")
    plan = dataset_io.make_folds(ds, args.folds, args.repeats, hyper.seed)
    accs, times = [], []
    for r in range(plan.repeats):
        for f in range(plan.folds):
            train = ds.subset(plan.train_indices(r, f))
            test = ds.subset(plan.test_indices(r, f))
            start = time.perf_counter()
            h, c = (_select(name, train, hyper, args.svm_c, args) if args.grid
                    else (hyper, args.svm_c))
            pred = _fit_predict(name, train, test.samples, h, c)
            elapsed = time.perf_counter() - start
            accs.append(evalstats.accuracy_of(pred, test.labels))
            times.append(0.0 if args.no_time else elapsed)
    return np.array(accs), np.array(times)


def cmd_crossval(args):
    hyper = _hyper(args)
    ds = dataset_io.read_tds(args.data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        accs, times = run_crossval(ds, args.classifier, hyper, args)
    with _Output(args.out) as out:
        out.write(f"classifier={args.classifier} folds={args.folds} repeats={args.repeats} "
                  f"seed={hyper.seed}\n")
        out.write(f"ACCU={accs.mean():.6f}±{accs.std():.6f}\n")
        out.write(f"time={times.mean():.6f}±{times.std():.6f}\n")
    return EXIT_OK


def cmd_bench(args):
    hyper = _hyper(args)
    names = [c.strip() for c in args.classifiers.split(",") if c.strip()]
    bad = [c for c in names if c not in CLASSIFIERS]
    if bad or not names:
        raise UsageError(f"unknown classifiers {bad}; choose from {list(CLASSIFIERS)}")
    if args.alpha not in evalstats.NEMENYI_Q:
        raise UsageError("--alpha must be 0.05 or 0.1")
    if args.stats_n is not None and args.stats_n < 1:
        raise UsageError("--stats-n must be positive")
    reference = args.reference or names[0]
    if reference not in names:
        raise UsageError(f"--reference {reference!r} is not among the classifiers")
    runs = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for path in args.data:
            ds = dataset_io.read_tds(path)
            for name in names:
                runs[(path, name)] = run_crossval(ds, name, hyper, args)
    table = evalstats.ResultTable.from_runs(runs)
    ranks = evalstats.rank_table(table) if len(names) > 1 else None
    summary = evalstats.summarize(ranks, args.alpha, args.stats_n) if ranks is not None else None
    with _Output(args.out) as out:
        evalstats.emit_report(table, ranks, summary, out, args.format, reference)
    return EXIT_OK


def _read_metric_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataError("need a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    names = header[1:]
    datasets, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        datasets.append(row[0].strip())
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
    return datasets, names, np.array(values)


def cmd_stats(args):
    if args.alpha not in evalstats.NEMENYI_Q:
        raise UsageError("--alpha must be 0.05 or 0.1")
    if args.stats_n is not None and args.stats_n < 1:
        raise UsageError("--stats-n must be positive")
    datasets, names, values = _read_metric_csv(args.input)
    if not 2 <= len(names) <= 10:
        raise DataError(f"need 2 to 10 classifier columns, got {len(names)}")
    if args.input_ranks:
        ranks = values
    else:
        ranks = np.stack([evalstats.rank_row(r, not args.lower_is_better) for r in values])
    table = evalstats.RankTable(datasets, names, ranks)
    summary = evalstats.summarize(table, args.alpha, args.stats_n)
    with _Output(args.out) as out:
        out.write("classifier,average_rank\n")
        for name, r in zip(names, table.average):
            out.write(f"{name},{r:.4f}\n")
        out.write(f"chi2={summary.chi2:.4f} dof={summary.dof} p={summary.p_value:.4g} "
                  f"N={summary.n_datasets}\n")
        out.write(f"CD={summary.cd:.4f} alpha={summary.alpha}\n")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "convert": cmd_convert, "train": cmd_train,
            "predict": cmd_predict, "crossval": cmd_crossval, "bench": cmd_bench,
            "stats": cmd_stats}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"npstm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, OSError) as exc:
        print(f"npstm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"npstm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
