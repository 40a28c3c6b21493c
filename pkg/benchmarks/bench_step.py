"""Step-rate benchmark: compiled kernel vs the numpy fallback.

Runs the reference two-section device at a few grid sizes and reports
microseconds per time step and the speedup of the compiled backend.

    python3 benchmarks/bench_step.py [--repeats 5] [--steps 2000]
"""

import argparse
import time

import numpy as np

from cwlaser import _kernels, make_grid
from cwlaser.params import fig1_like
from cwlaser.twm import InjectionSignal, SimWorkspace, initial_state


def bench_backend(config, grid, backend, steps, repeats):
    best = float("inf")
    for _ in range(repeats):
        state = initial_state(config, grid, amplitude=1e-3)
        ws = SimWorkspace(state, config, grid, InjectionSignal.zero())
        _kernels.advance(ws, 50, backend=backend)     # warm up
        t0 = time.perf_counter()
        _kernels.advance(ws, steps, backend=backend)
        best = min(best, (time.perf_counter() - t0) / steps)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    config = fig1_like()
    have_compiled = _kernels._step_cy is not None
    print(f"default backend: {_kernels.BACKEND}")
    print(f"{'cells':>6} {'numpy us/step':>14} {'compiled us/step':>17} "
          f"{'speedup':>8}")
    for target in (256, 512, 1024, 2048):
        grid = make_grid(config, target_cells=target)
        t_np = bench_backend(config, grid, "numpy", args.steps, args.repeats)
        if have_compiled:
            t_cy = bench_backend(config, grid, "compiled", args.steps,
                                 args.repeats)
            print(f"{grid.n_cells:>6} {t_np * 1e6:>14.1f} "
                  f"{t_cy * 1e6:>17.1f} {t_np / t_cy:>8.1f}x")
        else:
            print(f"{grid.n_cells:>6} {t_np * 1e6:>14.1f} "
                  f"{'(not built)':>17} {'-':>8}")

    # the two backends implement the same update; spot check agreement
    grid = make_grid(config, target_cells=256)
    outs = []
    for backend in ("numpy", "compiled") if have_compiled else ("numpy",):
        state = initial_state(config, grid, amplitude=1e-3)
        ws = SimWorkspace(state, config, grid, InjectionSignal.zero())
        _kernels.advance(ws, 500, backend=backend)
        outs.append(ws.psi1.copy())
    if len(outs) == 2:
        diff = float(np.max(np.abs(outs[0] - outs[1])))
        print(f"backend agreement after 500 steps: max |delta psi1| = "
              f"{diff:.2e}")


if __name__ == "__main__":
    main()
