"""Compare the compiled chain kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times forward-backward and Viterbi on document-shaped inputs (hundreds of
lines, a few dozen labels) and checks both backends agree numerically.
"""

import argparse
import time

import numpy as np

from itemseg.kernels import BACKEND, _pychain

try:
    from itemseg.kernels import _cchain
except ImportError:
    _cchain = None


SHAPES = [(100, 10), (500, 25), (2000, 45)]


def _instance(rng, n, L):
    state = rng.normal(size=(n, L))
    trans = rng.normal(size=(L, L))
    return np.ascontiguousarray(state), np.ascontiguousarray(trans)


def _time(fn, state, trans, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(state, trans)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {BACKEND}")
    if _cchain is None:
        print("compiled kernel unavailable; timing the python backend only")

    rng = np.random.default_rng(0)
    header = f"{'shape':>12} {'kernel':>18} {'python':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n, L in SHAPES:
        state, trans = _instance(rng, n, L)
        for name in ("forward_backward", "viterbi"):
            py_fn = getattr(_pychain, name)
            t_py = _time(py_fn, state, trans, args.repeats)
            if _cchain is not None:
                c_fn = getattr(_cchain, name)
                t_c = _time(c_fn, state, trans, args.repeats)
                if name == "forward_backward":
                    lz_p, marg_p, pair_p = py_fn(state, trans)
                    lz_c, marg_c, pair_c = c_fn(state, trans)
                    assert abs(lz_p - lz_c) < 1e-9
                    assert np.allclose(marg_p, marg_c, atol=1e-12)
                    assert np.allclose(pair_p, pair_c, atol=1e-12)
                else:
                    assert np.array_equal(py_fn(state, trans), c_fn(state, trans))
                print(
                    f"{f'{n}x{L}':>12} {name:>18} {t_py * 1e3:>9.2f}ms"
                    f" {t_c * 1e3:>9.2f}ms {t_py / t_c:>7.1f}x"
                )
            else:
                print(f"{f'{n}x{L}':>12} {name:>18} {t_py * 1e3:>9.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
