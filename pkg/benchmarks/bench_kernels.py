"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints per-call timings for the two hot kernels at a few problem sizes and
an end-to-end ``fit_mar`` timing under each backend (the latter in a
subprocess, since the backend is chosen at import).
"""
import argparse
import os
import subprocess
import sys
import textwrap
import timeit

import numpy as np

from marssl import _kernels_py

try:
    from marssl import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

SIZES = [(2_000, 2, 10), (60_000, 2, 10), (20_000, 5, 10), (5_000, 20, 5)]

E2E = textwrap.dedent("""
    import time
    from marssl import kernels
    from marssl.datagen import TwoClusterConfig, gen_two_cluster_mar
    from marssl.ssl import fit_mar
    d1, d0, _ = gen_two_cluster_mar(TwoClusterConfig(seed=0))
    t = time.perf_counter()
    fit_mar(d1, d0, seed=0)
    print(kernels.BACKEND, time.perf_counter() - t)
""")


def problem(N, d, K, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    means = rng.standard_normal((K, d))
    A = rng.standard_normal((K, d, d))
    cov = A @ np.transpose(A, (0, 2, 1)) + d * np.eye(d)
    chols = np.ascontiguousarray(np.linalg.cholesky(cov))
    log_coef = np.log(np.full(K, 1.0 / K)) - np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(1)
    return X, means, chols, log_coef


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args()
    if _kernels_c is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<16}{'N':>8}{'d':>4}{'K':>4}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for N, d, K in SIZES:
        X, means, chols, log_coef = problem(N, d, K)
        for name, argv in (("mixture_logpdf", (X, means, chols, log_coef)),
                           ("mahalanobis", (X, means, chols))):
            tp = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*argv),
                                   number=1, repeat=args.repeat)) * 1e3
            if _kernels_c is not None:
                tc = min(timeit.repeat(lambda: getattr(_kernels_c, name)(*argv),
                                       number=1, repeat=args.repeat)) * 1e3
                a, b = getattr(_kernels_py, name)(*argv), getattr(_kernels_c, name)(*argv)
                assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
                print(f"{name:<16}{N:>8}{d:>4}{K:>4}{tp:>12.2f}{tc:>12.2f}{tp / tc:>9.1f}")
            else:
                print(f"{name:<16}{N:>8}{d:>4}{K:>4}{tp:>12.2f}{'-':>12}{'-':>9}")
    if not args.no_e2e:
        print("\nend-to-end fit_mar on the default two-cluster scenario (seconds):")
        for pure in ("1", "0"):
            env = dict(os.environ, MARSSL_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                                 text=True, check=True)
            print("  " + out.stdout.strip())


if __name__ == "__main__":
    main()
