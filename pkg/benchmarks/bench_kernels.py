"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--repeat 5]``.
"""

import argparse
import timeit

import numpy as np

from ddmpref import _backend
from ddmpref import simulator as sim


def cases():
    rng = np.random.default_rng(0)
    t = rng.exponential(1.5, 10**6) + 1e-3
    cache = sim.build_cache(1.25, (-1.0, 1.0), 41)
    rows = rng.integers(0, 41, 10**6)
    u = rng.random(10**6)
    shift = float(t.min())
    return {
        "weight_w (1e6 times)": lambda k: k.weight_w(1.25, t, 100),
        "log_f0 (1e6 times)": lambda k: k.log_f0(1.25, t, 100),
        "laplace_mean (1e6 times)": lambda k: k.laplace_mean(t, 8.0, shift),
        "inverse_cdf (1e6 draws)": lambda k: k.inverse_cdf(cache.cdf_table, cache.time_grid,
                                                            rows, u),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _backend.compiled_kernels is None:
        print("compiled extension not built; only the Python backend is timed")
    backends = [("python", _backend.python_kernels)]
    if _backend.compiled_kernels is not None:
        backends.insert(0, ("cython", _backend.compiled_kernels))

    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name, _ in backends) + "     speedup")
    for label, fn in cases().items():
        best = [min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                for _, k in backends]
        speed = f"{best[-1] / best[0]:10.1f}x" if len(best) == 2 else ""
        print(f"{label:<28}" + "".join(f"{b * 1e3:10.1f}ms" for b in best) + speed)


if __name__ == "__main__":
    main()
