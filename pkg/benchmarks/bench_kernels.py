"""Compare the compiled and numpy stepping kernels.

Usage::

    python benchmarks/bench_kernels.py [--cells 512] [--paths 64] [--duration 0.25]

Prints seconds, steps and nanoseconds per cell update for each backend and
model, plus the speedup of the compiled core and the largest state
difference between the two.
"""
import argparse
import time

import numpy as np

from stochflux import _core_py, builtin_model
from stochflux.field import Grid
from stochflux.kernels import BACKEND, core
from stochflux.solver import FLUX_SCHEMES, SolverConfig


def run(mod, U, dx, spec, cfg, duration, probes):
    kc, k0, k1, hc, h0 = spec.kernel
    acc = np.zeros((U.shape[0], 3 + len(probes)))
    start = time.perf_counter()
    steps = mod.advance(U, duration, dx, cfg.cfl_safety, cfg.max_dt, spec.kappa0, kc, k0, k1,
                        hc, h0, FLUX_SCHEMES[cfg.flux_scheme], acc, U.mean(axis=1),
                        float(spec.q), probes)
    return time.perf_counter() - start, steps


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cells", type=int, default=512)
    p.add_argument("--paths", type=int, default=64)
    p.add_argument("--duration", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if BACKEND != "cython":
        raise SystemExit("compiled extension not built; run `python setup.py build_ext --inplace`")
    grid = Grid(16.0, args.cells)
    cfg = SolverConfig()
    probes = np.array([args.cells // 4, 3 * args.cells // 4], dtype=np.int64)
    rng = np.random.default_rng(args.seed)
    U0 = 0.5 * rng.standard_normal((args.paths, args.cells))
    print(f"{'model':<26}{'backend':<9}{'seconds':>9}{'steps':>8}{'ns/cell':>10}")
    for name in ("burgers", "tanh_kappa_subquadratic"):
        spec = builtin_model(name)
        out = {}
        for label, mod in (("cython", core), ("numpy", _core_py)):
            U = U0.copy()
            secs, steps = run(mod, U, grid.dx, spec, cfg, args.duration, probes)
            ns = secs / (steps * args.paths * args.cells) * 1e9
            out[label] = (secs, U)
            print(f"{name:<26}{label:<9}{secs:>9.3f}{steps:>8d}{ns:>10.1f}")
        diff = float(np.max(np.abs(out["cython"][1] - out["numpy"][1])))
        print(f"{'':<26}speedup {out['numpy'][0] / out['cython'][0]:.1f}x, "
              f"max |difference| {diff:.1e}")


if __name__ == "__main__":
    main()
