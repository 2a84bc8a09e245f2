"""Throughput of the dense stepping loop: compiled kernel vs numpy fallback.

Usage: python benchmarks/bench_stepping.py [n_cells] [n_steps]
"""

import sys
import time

import numpy as np
import scipy.linalg

from mgtlab import _stepping
from mgtlab import assembly as asm
from mgtlab import evolution as evo
from mgtlab import geometry as geo
from mgtlab.model import derive_params


def build_propagator(n_cells, dt):
    params = derive_params(1.0, 1.0, 0.0, 1.0, 1.0)
    mesh = geo.build_interval(0.0, 1.0, n_cells)
    part = geo.partition_boundary(mesh, -1.0)
    ops = asm.assemble_fem(mesh, part, params)
    bundle = asm.build_generators(ops)
    A, E = bundle.A_u.toarray(), bundle.E.toarray()
    S = scipy.linalg.solve(E - 0.5 * dt * A, E + 0.5 * dt * A)
    x0 = evo.initial_state(ops, "eigenmode", mode=1).flat()
    return S, x0


def main():
    n_cells = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    n_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 50_000
    S, x0 = build_propagator(n_cells, dt=1e-3)
    print(f"system size {S.shape[0]} (N = {n_cells} cells), {n_steps} steps")

    results = {}
    impls = ["python"] + (["compiled"] if _stepping.HAVE_COMPILED else [])
    for impl in impls:
        _stepping.orbit_one(S, x0, 2000, 1, impl=impl)  # warm up
        t0 = time.perf_counter()
        out = _stepping.orbit_one(S, x0, n_steps, 1, impl=impl)
        elapsed = time.perf_counter() - t0
        results[impl] = (elapsed, out)
        print(f"  {impl:9s}: {n_steps / elapsed:10.0f} steps/s   ({elapsed:.3f} s)")

    if len(results) == 2:
        dev = np.abs(results["compiled"][1] - results["python"][1]).max()
        speedup = results["python"][0] / results["compiled"][0]
        print(f"  speedup {speedup:.2f}x, max |state difference| = {dev:.3g}")
    elif not _stepping.HAVE_COMPILED:
        print("  compiled kernels not available (pure-Python install)")


if __name__ == "__main__":
    main()
