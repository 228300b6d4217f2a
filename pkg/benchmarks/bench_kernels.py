"""Benchmark the jitted kernels against the pure-numpy fallback.

Micro-benchmarks call both implementations in-process; the end-to-end rows
re-run a grid iteration and a Monte-Carlo iteration in subprocesses with
CHERNOFF_NUMBA=1 / CHERNOFF_NUMBA=0 so each path is measured as users get it.

Usage: python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from feller import _kernels as K


def timeit(fn, *args, repeat=7):
    fn(*args)  # warm (and JIT-compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def micro():
    rng = np.random.default_rng(0)
    rows = []

    values = rng.normal(size=512)
    idx = rng.integers(0, 512, size=(200_000, 4))
    w = rng.normal(size=(200_000, 4))
    rows.append(("gather_weighted 200k x 4", timeit(K._gather_weighted_np, values, idx, w),
                 timeit(K.gather_weighted, values, idx, w)))

    streams = K.substream(1, np.arange(1_000_000))
    rows.append(("step_uniforms 1M", timeit(K._step_uniforms_np, streams, 3),
                 timeit(K.step_uniforms, streams, 3)))
    return rows


END_TO_END = {
    "iterate_grid circle 512x256": (
        "import numpy as np, feller as fl\n"
        "from feller.chernoff import ChernoffVariant as CV\n"
        "from feller.grids import GridFunction\n"
        "circ = fl.circle()\n"
        "spec = fl.GeneratorSpec([fl.frame_field(circ, 1)], drift_policy='explicit')\n"
        "g0 = GridFunction.from_function(circ, 512, lambda c: np.cos(c[:, 0]))\n"
        "fl.iterate_grid(spec, CV.HEAT_GEODESIC, 1.0, 8, g0)\n"  # warm
        "import time; t0 = time.perf_counter()\n"
        "fl.iterate_grid(spec, CV.HEAT_GEODESIC, 1.0, 256, g0)\n"
        "print(time.perf_counter() - t0)\n"
    ),
    "iterate_mc circle 1e6 x 32": (
        "import numpy as np, feller as fl\n"
        "from feller.chernoff import ChernoffVariant as CV\n"
        "circ = fl.circle()\n"
        "spec = fl.GeneratorSpec([fl.frame_field(circ, 1)], drift_policy='explicit')\n"
        "f = lambda c: np.cos(c[:, 0])\n"
        "fl.iterate_mc(spec, CV.GENERAL, 1.0, 4, f, circ.point([0.0]), 10**4, seed=1)\n"
        "import time; t0 = time.perf_counter()\n"
        "fl.iterate_mc(spec, CV.GENERAL, 1.0, 32, f, circ.point([0.0]), 10**6, seed=1)\n"
        "print(time.perf_counter() - t0)\n"
    ),
}


def end_to_end():
    rows = []
    for name, code in END_TO_END.items():
        times = {}
        for flag in ("0", "1"):
            env = dict(os.environ, CHERNOFF_NUMBA=flag)
            out = subprocess.run(
                [sys.executable, "-c", code], env=env, capture_output=True, text=True
            )
            times[flag] = float(out.stdout.strip().splitlines()[-1]) if out.returncode == 0 else float("nan")
        rows.append((name, times["0"], times["1"]))
    return rows


def main():
    print(f"numba path active in this process: {K.using_numba()}")
    print(f"{'kernel':36s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, t_np, t_nb in micro() + end_to_end():
        ratio = t_np / t_nb if t_nb > 0 else float("nan")
        print(f"{name:36s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {ratio:7.1f}x")


if __name__ == "__main__":
    main()
