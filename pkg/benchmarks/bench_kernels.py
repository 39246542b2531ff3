"""Compare the compiled and pure-numpy channel kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends consume the
random stream identically, so the script also checks that their sanitized
arrays agree bit for bit.
"""

import argparse
import timeit

import numpy as np

from ldpquad import channel_ni, kernels


def bench(J: int, n: int, repeat: int) -> None:
    cfg = channel_ni.NiConfig(1.0, 2.0, J)
    cells = np.random.default_rng(0).integers(0, 1 << J, n)
    scales = cfg.noise_scales()
    draws = n * (1 << J)
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    for name, mod in backends.items():
        t = min(timeit.repeat(lambda: mod.ni_accumulate(cells, J, scales, np.random.default_rng(1)), number=1, repeat=repeat))
        print(f"J={J:2d} n={n:7d} {name:8s} {t:8.4f} s  {1e9 * t / draws:6.2f} ns/draw")
    if "compiled" in backends:
        a = kernels.compiled_backend.ni_sanitize(cells[:512], J, scales, np.random.default_rng(2))
        b = kernels.python_backend.ni_sanitize(cells[:512], J, scales, np.random.default_rng(2))
        print(f"           sanitized arrays identical: {np.array_equal(a, b)}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    for J, n in [(4, 1 << 17), (8, 1 << 15), (8, 1 << 17), (12, 1 << 12)]:
        bench(J, n, args.repeat)


if __name__ == "__main__":
    main()
