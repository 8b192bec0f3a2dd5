"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from prvr import _kernels_py as py

try:
    from prvr import _kernels as cy
except ImportError:
    cy = None


def workloads(rng):
    scores = rng.uniform(-1, 1, 64)
    table = rng.normal(size=61)
    grad = rng.normal(size=(32, 32))
    sim = rng.uniform(-1, 1, (1000, 1000))
    truth = np.arange(1000, dtype=np.int64)
    mu, sd = float(scores.mean()), float(scores.std())
    ind = py.window_indicator(scores, mu + sd, mu - sd, 3)
    return {
        "window_indicator (K=64, k=3)": lambda m: m.window_indicator(scores, mu + sd, mu - sd, 3),
        "apply_indicator (K=64)": lambda m: m.apply_indicator(scores, ind, 0.1),
        "offset_bias_matrix (K=32, R=30)": lambda m: m.offset_bias_matrix(table, 32, 30),
        "offset_bias_grad (K=32, R=30)": lambda m: m.offset_bias_grad(grad, 30),
        "ground_truth_ranks (1000x1000)": lambda m: m.ground_truth_ranks(sim, truth),
    }


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, call in workloads(rng).items():
        t_py = best_of(lambda: call(py), args.repeat) * 1e6
        if cy is None:
            print(f"{name:<34}{t_py:14.2f}{'n/a':>14}{'n/a':>10}")
            continue
        t_cy = best_of(lambda: call(cy), args.repeat) * 1e6
        print(f"{name:<34}{t_py:14.2f}{t_cy:14.2f}{t_py / t_cy:9.1f}x")


if __name__ == "__main__":
    main()
