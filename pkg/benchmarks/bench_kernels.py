"""Compare the compiled and interpreted kernel backends.

Times the coordinate-descent sweeps and the Jacobi eigen sweeps on fixed
inputs, then a full training run under each backend (in a subprocess, since
the backend is chosen at import).

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from npstm import kernels

TRAIN_SNIPPET = """
import time
from npstm import dataset_io, kernels, ldm
ds = dataset_io.generate_synthetic((4, 4), 20, 20, 3.0, 1.0, 7)
ts = ldm.TrainingSet.from_labeled(ds.samples, ds.labels)
start = time.perf_counter()
ldm.train(ts, ldm.Hyperparams(rank=2))
print(kernels.BACKEND, time.perf_counter() - start)
"""


def cd_case(m, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((max(1, m // 4), m))
    return np.ascontiguousarray(Z.T @ Z), rng.standard_normal(m)


def time_cd(module, H, f, sweeps, repeat):
    def run():
        alpha = np.zeros(len(f))
        g = np.ascontiguousarray(-f)
        module.cd_sweeps(H, f, 1.0, alpha, g, 0.0, sweeps)
    return min(timeit.repeat(run, number=1, repeat=repeat))


def time_jacobi(module, S, repeat):
    tol = 1e-12 * np.linalg.norm(S)

    def run():
        module.jacobi_eigh(np.ascontiguousarray(S.copy()), np.eye(len(S)), tol, 100)
    return min(timeit.repeat(run, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    try:
        backends = {"python": kernels.backend_module("python"),
                    "cython": kernels.backend_module("cython")}
    except ImportError:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    py, cy = backends["python"], backends["cython"]

    print(f"{'kernel':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for m, sweeps in ((40, 50), (200, 20), (800, 5)):
        H, f = cd_case(m)
        tp = time_cd(py, H, f, sweeps, args.repeat)
        tc = time_cd(cy, H, f, sweeps, args.repeat)
        print(f"{f'cd_sweeps m={m} x{sweeps}':<28}{tp:>12.5f}{tc:>12.5f}{tp / tc:>10.1f}")
    for n in (4, 8, 16, 32):
        B = np.random.default_rng(n).standard_normal((n, n))
        S = B + B.T
        tp = time_jacobi(py, S, args.repeat)
        tc = time_jacobi(cy, S, args.repeat)
        print(f"{f'jacobi_eigh n={n}':<28}{tp:>12.5f}{tc:>12.5f}{tp / tc:>10.1f}")

    times = {}
    for name, flag in (("python", "1"), ("cython", "")):
        env = dict(os.environ, NPSTM_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        times[out[0]] = float(out[1])
    tp, tc = times["python"], times["cython"]
    print(f"{'train 4x4, m=40, R=2':<28}{tp:>12.5f}{tc:>12.5f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
