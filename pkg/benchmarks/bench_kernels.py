"""Compare the numba and numpy distance kernels.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one tab-separated row per (kernel, size) with the best time of each
backend and the speedup. Both backends must agree on every result.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from hima import _kernels


def _cases(rng):
    for n, d in ((200, 40), (1000, 60), (5000, 60)):
        yield "nearest_index", (n, d), (rng.random((n, d)), rng.random(d))
    for n, k, d in ((500, 3, 20), (5000, 5, 20), (20000, 8, 20)):
        yield "assign", (n, k, d), (rng.random((n, d)), rng.random((k, d)))


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.allclose(x, y) for x, y in zip(a, b))
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _kernels.jit_kernels is None:
        print("numba is not installed; only the numpy kernels are available")
        return 1
    rng = np.random.default_rng(args.seed)
    print("kernel\tsize\tnumpy_s\tnumba_s\tspeedup")
    for name, size, data in _cases(rng):
        jit, ref = _kernels.jit_kernels[name], _kernels.numpy_kernels[name]
        if not _same(jit(*data), ref(*data)):  # also triggers compilation
            raise AssertionError(f"{name} backends disagree at size {size}")
        t_np = min(timeit.repeat(lambda: ref(*data), number=1, repeat=args.repeat))
        t_jit = min(timeit.repeat(lambda: jit(*data), number=1, repeat=args.repeat))
        print(f"{name}\t{'x'.join(map(str, size))}\t{t_np:.6f}\t{t_jit:.6f}\t{t_np / t_jit:.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
