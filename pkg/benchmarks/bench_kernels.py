"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--quick]
"""

import argparse
import time

import numpy as np

from entanglekit import datagen
from entanglekit._backend import get_backend
from entanglekit.kernels import normalize_rows
from entanglekit.qstate import BipartiteDims


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    out = []
    for d in (3, 4):
        dims = BipartiteDims(d, d)
        rho = datagen.random_mixture(dims.total, 3, rng)
        a0, b0 = datagen.random_pure(d, rng), datagen.random_pure(d, rng)
        T = 200 if quick else 1000
        out.append((f"frank_wolfe {dims} T={T}", lambda k, r=rho, a=a0, b=b0, dd=d, T=T:
                    k.frank_wolfe(r, dd, dd, a, b, T, 0)))
    for n in (9, 25):
        m = datagen.random_density(n, rng)
        out.append((f"jacobi_eigh complex {n}", lambda k, m=m: k.jacobi_eigh(m)))
    for n in ((81,) if quick else (81, 256)):
        x = rng.standard_normal((2 * n, n))
        c = np.cov(x.T)
        out.append((f"jacobi_eigh real {n}", lambda k, c=c: k.jacobi_eigh(c)))
    n = 300 if quick else 1000
    X = normalize_rows(rng.standard_normal((n, 64)))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(n) > 0, 1.0, -1.0)
    K = (X @ X.T) ** 2
    out.append((f"smo n={n}", lambda k, K=K, y=y: k.smo(K, y, 10.0, 1e-3, 10 ** 7)))
    X2 = rng.standard_normal((n, 128))
    out.append((f"dot_matrix {n}x128", lambda k, X=X2: k.dot_matrix(X, X)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = p.parse_args(argv)
    py = get_backend("python")
    try:
        cc = get_backend("compiled")
    except ImportError:
        cc = None
        print("compiled backend not built; timing the numpy fallback only")
    print(f"{'kernel':32s} {'python [s]':>12s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, fn in cases(args.quick):
        tp = _best(lambda: fn(py), args.repeat)
        if cc is None:
            print(f"{name:32s} {tp:12.4f}")
            continue
        tc = _best(lambda: fn(cc), args.repeat)
        print(f"{name:32s} {tp:12.4f} {tc:13.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
