"""Benchmark the compiled stepping kernel against the numpy fallback.

Usage: python benchmarks/bench_stepper.py [--n-cells 120 240] [--repeats 3]

Times full pathwise solves of a blow-up run and a decay run on each
backend and prints the speedup; also verifies the two backends agree.
"""

from __future__ import annotations

import argparse
import time

from rdblow.fbm import HurstParameter, TimeGrid, sample_path
from rdblow.solver import (HAVE_COMPILED, InitialDatum, ModelParams,
                           SolverControls, solve)
from rdblow.spectral import DomainSpec, build_basis


def bench_case(name, params, datum, grid, n_cells, repeats):
    dom = DomainSpec.interval(3.0, n_cells)
    basis = build_basis(dom, min(64, n_cells - 1))
    path = sample_path(params.hurst, grid, 20260810)
    rows = []
    for backend in ("compiled", "python"):
        if backend == "compiled" and not HAVE_COMPILED:
            continue
        controls = SolverControls(store_fields=False, backend=backend)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            tr = solve(params, basis, datum, path, controls)
            best = min(best, time.perf_counter() - t0)
        rows.append((backend, best, tr.n_steps, tr.verdict, tr.tau_num))
    print(f"\n{name} (n_cells={n_cells})")
    for backend, secs, steps, verdict, tau in rows:
        rate = steps / secs / 1e6
        print(f"  {backend:<9} {secs * 1e3:9.2f} ms  {steps:>8} steps "
              f"{rate:7.2f} Msteps/s  {verdict}"
              + (f" tau={tau:.6g}" if tau is not None else ""))
    if len(rows) == 2:
        print(f"  speedup: {rows[1][1] / rows[0][1]:.1f}x")
        t1, t2 = rows[0][4], rows[1][4]
        if t1 is not None and t2 is not None:
            print(f"  tau agreement: {abs(t1 - t2):.3e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-cells", type=int, nargs="+", default=[120, 240])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print(f"compiled kernel available: {HAVE_COMPILED}")
    blow = ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=0.5, p=1.5, q=2.0,
                       m=0.0, n=2.0, hurst=HurstParameter(0.75))
    decay = ModelParams(gamma=0.0, k=4.0, delta=0.0, eta=0.25, p=2.0, q=2.0,
                        m=0.0, n=2.0, hurst=HurstParameter(0.75))
    for n_cells in args.n_cells:
        bench_case("blow-up run (f = 60*phi)", blow,
                   InitialDatum.multiple_of_phi(60.0), TimeGrid(0.75, 1536),
                   n_cells, args.repeats)
        bench_case("decay run (f = 0.01*phi)", decay,
                   InitialDatum.multiple_of_phi(0.01), TimeGrid(1.5, 1536),
                   n_cells, args.repeats)


if __name__ == "__main__":
    main()
