"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the comparison does not depend on
CONDSPEC_PURE_PYTHON. Each line reports the best of ``--repeat`` runs.
"""
import argparse
import timeit

import numpy as np

from condspec import _pykernels

try:
    from condspec import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    draws = rng.standard_normal((20_000, 101))
    w = rng.uniform(0.1, 1.0, 101)
    mu = w / w.sum()
    q = rng.standard_normal((8, 8))
    quad = q @ q.T
    rows8 = rng.standard_normal((200_000, 8))
    g = rng.standard_normal((101, 101))
    cov = g @ g.T
    return [
        ("normals 2e6", lambda k: k.normals(1, 2, 0, 2_000_000)),
        ("uniforms 2e6", lambda k: k.uniforms(1, 2, 0, 2_000_000)),
        ("weighted_sup_abs 20000x101", lambda k: k.weighted_sup_abs(draws, w)),
        ("weighted_sum_sq 20000x101", lambda k: k.weighted_sum_sq(draws, mu)),
        ("quad_form_rows 200000x8", lambda k: k.quad_form_rows(rows8, quad)),
        ("psd_cholesky 101x101", lambda k: k.psd_cholesky(cov, 1e-10 * cov.diagonal().max(), False)),
        ("psd_cholesky_pivoted 101x101", lambda k: k.psd_cholesky_pivoted(cov, 1e-10 * cov.diagonal().max())),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':<30}{'compiled (ms)':>15}{'fallback (ms)':>15}{'speedup':>10}")
    for name, fn in cases():
        slow = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<30}{'-':>15}{slow:>15.2f}{'-':>10}")
            continue
        fast = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<30}{fast:>15.2f}{slow:>15.2f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
