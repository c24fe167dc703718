"""Benchmark the compiled finite-volume kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 200]

The step kernel is the hot loop of dataset generation (hundreds of substeps
per trajectory), which is what justifies the compiled backend.
"""

import argparse
import time

import numpy as np

from fluxlab.fv import FluxModel
from fluxlab.fv.kernels import backends

CASES = [
    ("cubic", FluxModel.cubic(0.7, -0.3, 0.9)),
    ("sine", FluxModel.sine(0.8, 0.9)),
    ("shallow_water", FluxModel.shallow_water(1.0, 1.0, 9.81)),
    ("viscous_burgers", FluxModel.viscous_burgers(1.0, 0.01)),
]


def make_state(model, n, rng):
    if model.kind == "shallow_water":
        return np.ascontiguousarray(
            np.stack([1.0 + 0.3 * rng.standard_normal(n), rng.standard_normal(n)])
        )
    return np.ascontiguousarray(rng.standard_normal((1, n)))


def bench(repeats):
    rng = np.random.default_rng(0)
    impls = backends()
    names = [name for name, _ in impls]
    print(f"available backends: {', '.join(names)}")
    print(f"{'family':<16} {'N':>6} " + " ".join(f"{n:>12}" for n in names) + "  speedup")
    for label, model in CASES:
        for n in (100, 400, 1600):
            u = make_state(model, n, rng)
            dt = 0.25 / n
            times = []
            for _, mod in impls:
                mod.rk2_step(model.kind_code, model.coeff_array, u, dt, 1.0 / n)
                t0 = time.perf_counter()
                for _ in range(repeats):
                    mod.rk2_step(model.kind_code, model.coeff_array, u, dt, 1.0 / n)
                times.append((time.perf_counter() - t0) / repeats)
            cols = " ".join(f"{t * 1e6:>10.1f}us" for t in times)
            speedup = times[-1] / times[0] if len(times) > 1 else 1.0
            print(f"{label:<16} {n:>6} {cols}  {speedup:>6.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    bench(parser.parse_args().repeats)
