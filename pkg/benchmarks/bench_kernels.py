"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the environment switch is not
needed. Outputs are compared before timing.
"""

import argparse
import timeit

import numpy as np

from prosoda import _pykernels

try:
    from prosoda import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    sig = rng.standard_normal(16000 * 3 + 400)
    n_frames = (sig.size - 400 - 267) // 320
    cost = rng.random((400, 8))
    logf = np.log(rng.uniform(60, 400, (400, 8)))
    pts = rng.standard_normal((20000, 40))
    cents = rng.standard_normal((100, 40))
    return {
        "nccf_matrix (3 s audio)": ("nccf_matrix", (sig, n_frames, 320, 400, 40, 267)),
        "viterbi (400 x 8)": ("viterbi", (cost, logf, 0.35, 0.5, 1.5)),
        "nearest_centroid (20000 x 40, K=100)": ("nearest_centroid", (pts, cents)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    if _ckernels is None:
        print("compiled kernels unavailable; only the numpy fallback is timed")
    print(f"{'kernel':<40}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for label, (name, call_args) in cases(rng).items():
        py_fn = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{label:<40}{t_py:>12.2f}{'-':>12}{'-':>10}")
            continue
        c_fn = getattr(_ckernels, name)
        if not _same(py_fn(*call_args), c_fn(*call_args)):
            raise SystemExit(f"{name}: backends disagree")
        t_c = min(timeit.repeat(lambda: c_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<40}{t_py:>12.2f}{t_c:>12.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
