"""Wall-clock comparison of the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once before timing so JIT compilation is excluded.
"""
import argparse
import time

import numpy as np

from percpeak import _kernels
from percpeak.auditory import ModelConfig
from percpeak.harness import synth_kick
from percpeak.solvers import _Quadratic, weight_matrix


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    gain = -np.abs(rng.standard_normal(200_000)) * 12.0
    yield "drc_smooth (200k samples)", _kernels.drc_smooth_numpy, _kernels.drc_smooth_numba, (gain, 0.9, 0.999)

    x = synth_kick()
    w = ModelConfig().weights_for(x).weights
    q = _Quadratic(x.samples, w * w)
    apg_args = (q.x0, q.X0, q.w2_half, q.mw2, q.inv_mw2, q.lip, 0.7, q.x0.copy(), 2000, 0.0, 10,
                np.inf, np.inf, np.inf)
    yield "apg_box (N=1000, 2000 its)", _kernels.apg_box_numpy, _kernels.apg_box_numba, apg_args

    n = 7
    x0 = rng.standard_normal(n)
    half = rng.uniform(0.1, 3.0, n // 2 + 1)
    Q = weight_matrix(half[np.minimum(np.arange(n), n - np.arange(n))])
    yield "enumerate_box_qp (N=7)", _kernels.enumerate_box_qp_numpy, _kernels.enumerate_box_qp_numba, \
        (x0, Q, 0.5 * np.max(np.abs(x0)), 1e-8)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':30s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}")
    for name, f_np, f_nb, a in cases():
        t_np = best_of(lambda: f_np(*a), args.repeat)
        if f_nb is None:
            print(f"{name:30s} {t_np:11.4f} {'n/a':>11s} {'':>8s}")
            continue
        t_nb = best_of(lambda: f_nb(*a), args.repeat)
        print(f"{name:30s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
