"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--grid-step 0.01]

First calls are made before timing so JIT compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from wpcn_noma import PhysicalConfig, build_network
from wpcn_noma import _kernels as kn
from wpcn_noma.throughput import decoding_orders


def _grid_args(step):
    inst = build_network(PhysicalConfig(), 2, 1, 40.0, 0)
    n = int(round(1 / step)) + 1
    nvar = inst.t + inst.k * inst.t
    values = np.tile(np.linspace(0.0, 1.0, n), (nvar, 1))
    counts = np.full(nvar, n, dtype=np.int64)
    return (values, counts, inst.k, inst.t, np.ascontiguousarray(inst.gamma),
            np.ascontiguousarray(inst.g), float(inst.noise_power),
            np.ascontiguousarray(inst.s_th), 1, decoding_orders(inst).astype(np.int64), 1)


def cases(step):
    rng = np.random.default_rng(0)
    p = rng.uniform(0, 1, (20, 10))
    noise = rng.uniform(0.1, 1, 10)
    order = np.tile(np.arange(20), (10, 1)).astype(np.int64)
    grid = _grid_args(step)
    return {
        "sinr_lcd 20x10": (kn.sinr_lcd_nb, kn.sinr_lcd_np, (p, noise)),
        "sinr_sicd 20x10": (kn.sinr_sicd_nb, kn.sinr_sicd_np, (p, noise, order)),
        "log_gap_root x1000": (kn.log_gap_root_nb, kn.log_gap_root_np, (rng.uniform(0.01, 5, 1000), 1e-12)),
        f"grid_search K=2 T=1 step={step:g}": (kn.grid_search_nb, kn.grid_search_np, grid),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--grid-step", type=float, default=0.01)
    args = ap.parse_args()

    print(f"{'kernel':36s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, (fast, slow, a) in cases(args.grid_step).items():
        fast(*a)  # compile
        t_nb = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat))
        print(f"{name:36s} {1e3 * t_nb:12.3f} {1e3 * t_np:12.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
