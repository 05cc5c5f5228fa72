"""Compiled vs NumPy kernels: stencil matvec, Crank-Nicolson inner solve, tql2.

    python benchmarks/bench_kernels.py [--n 96] [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` time for each backend
and the max deviation between their outputs.
"""

import argparse
import time

import numpy as np

from magberry import kernels
from magberry.hamiltonian import FluxDensity, GaussianWell, GridSpec, build_hamiltonian


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, seed=1):
    rng = np.random.default_rng(seed)
    grid = GridSpec(n, n, 0.25)
    H = build_hamiltonian(grid, FluxDensity(0.05), GaussianWell(2.0, 0.8), containment_factor=0.0)
    psi = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    tau = 0.5 * 0.02
    args = (H.ux, H.uy, H.diag, H.inv_h2)
    m = 200
    d = rng.standard_normal(m)
    e = np.concatenate([rng.standard_normal(m - 1), [0.0]])

    def ql(b):  # tql2 works in place
        dw = d.copy()
        b.tql2(dw, e.copy(), np.eye(m))
        return np.sort(dw)

    return {
        "stencil_apply": lambda b: b.stencil_apply(psi, *args),
        "cn_jacobi_solve": lambda b: b.cn_jacobi_solve(psi, psi, *args, tau, 1e-14, 500)[0],
        "tql2": ql,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=96)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py, cy = kernels.python_backend, kernels.compiled_backend
    print(f"grid {args.n}x{args.n}, best of {args.repeat}")
    if cy is None:
        print("compiled backend not available; timing the NumPy fallback only")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}{'max dev':>11}")
    for name, fn in cases(args.n).items():
        tp, op = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<18}{1e3 * tp:>12.3f}")
            continue
        tc, oc = best_of(lambda: fn(cy), args.repeat)
        dev = float(np.max(np.abs(np.asarray(op) - np.asarray(oc))))
        print(f"{name:<18}{1e3 * tp:>12.3f}{1e3 * tc:>13.3f}{tp / tc:>9.1f}{dev:>11.2e}")


if __name__ == "__main__":
    main()
