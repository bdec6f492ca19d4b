"""Compare the compiled and NumPy moment kernels, alone and inside a full test.

Run with ``python3 benchmarks/bench_kernels.py``.
"""

import time

import numpy as np

from weaknull import kernels
from weaknull.contrast import anova_contrast, make_hypothesis
from weaknull.data import ExperimentDataset
from weaknull.engine import frt_pvalue


def best_of(fn, repeat=5):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_case(N, J, R, H=1, seed=0):
    rng = np.random.default_rng(seed)
    ystar = rng.normal(size=(N, J, 1))
    strata = np.repeat(np.arange(H), N // H)
    assign = np.stack([rng.permutation(np.arange(N) % J) for _ in range(R)])
    return ystar, assign, strata * J, H * J


def main():
    backends = sorted(kernels.BACKENDS)
    print(f"available backends: {', '.join(backends)} (default {kernels.BACKEND})")
    print()
    print(f"{'kernel case':<28}" + "".join(f"{b:>12}" for b in backends))
    for N, J, R, H in [(120, 3, 1000, 1), (1000, 4, 1000, 1), (400, 3, 1000, 4), (5000, 2, 200, 1)]:
        args = kernel_case(N, J, R, H)
        row = [best_of(lambda b=b: kernels.cell_moments(*args, backend=b)) for b in backends]
        print(f"N={N:<5} J={J} R={R:<5} H={H:<3}  " + "".join(f"{1e3 * t:>10.2f}ms" for t in row))

    print()
    rng = np.random.default_rng(1)
    y = rng.normal(size=600) * np.repeat([1.0, 2.0, 3.0], 200)
    data = ExperimentDataset.from_arrays(np.repeat([0, 1, 2], 200), y)
    h = make_hypothesis(anova_contrast(3))
    default = kernels.BACKEND
    print(f"{'frt_pvalue x2, N=600, 10^4 draws':<36}")
    for b in backends:
        kernels.BACKEND = b
        t = best_of(lambda: frt_pvalue(data, h, "x2", draws=10_000, seed=0), repeat=3)
        print(f"  {b:<10} {t:.3f}s")
    kernels.BACKEND = default


if __name__ == "__main__":
    main()
