"""Compare the compiled and numpy implementations of the pairwise kernels.

Run: python benchmarks/bench_accel.py [--sites 36] [--times 30] [--repeat 5]
"""
import argparse
import time

import numpy as np

from stlmm import _purepy, accel
from stlmm.covariance import StDesign, _coefs, component_correlations
from stlmm.estimate.semivariogram import BinSpec, _classes
from stlmm.harness import get_config


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sites", type=int, default=36)
    p.add_argument("--times", type=int, default=30)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()

    rng = np.random.default_rng(0)
    design = StDesign(rng.uniform(0, 5, (a.sites, 2)), np.arange(1.0, a.times + 1))
    theta = get_config("VC2").theta
    rs, rt = component_correlations(theta, design)
    cells = design.obs_index
    s, t = design.site_of(cells), design.time_of(cells)
    resid = rng.standard_normal(cells.size)
    bins = BinSpec()
    sd, td, scls, tcls, _, tb = _classes(design, bins)

    impls = {"python": _purepy}
    if accel.BACKEND == "compiled":
        impls["compiled"] = accel._impl
    print(f"grid {a.sites} x {a.times} ({cells.size} cells); compiled extension: {accel.BACKEND == 'compiled'}")
    print(f"{'kernel':<14} {'backend':<10} {'seconds':>10}")
    for name, impl in impls.items():
        tf = best_of(lambda: accel.fill_cov(rs, rt, s, t, s, t, _coefs(theta), impl=impl), a.repeat)
        ts = best_of(
            lambda: accel.sv_accumulate(s, t, resid, scls, tcls, sd, td, bins.n_spatial + 1, len(tb), impl=impl),
            a.repeat,
        )
        print(f"{'fill_cov':<14} {name:<10} {tf:>10.4f}")
        print(f"{'sv_accumulate':<14} {name:<10} {ts:>10.4f}")


if __name__ == "__main__":
    main()
