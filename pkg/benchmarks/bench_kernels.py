"""
Compare the compiled and NumPy coupled-observer kernels.

Times single kernel calls and a full replication run with each backend and
checks that both produce the same trajectory.

    python3 benchmarks/bench_kernels.py [--t-end 30] [--repeat 3]
"""

import argparse
import time

import numpy as np

from distatt.kernels import PyCoupledKernel, compiled_kernel
from distatt.scenario import pyramid_preset
from distatt.system import CoupledSystem, simulate


def per_call(system, repeat):
    x = system.initial_state()
    k = system.kernel
    calls = {
        "step": lambda: k.step(x.R, x.Rh, x.xi, x.ph, 0, system.h),
        "edge_potentials": lambda: k.edge_potentials(x.R, x.Rh, x.xi),
        "diagnostics": lambda: k.diagnostics(x.R, x.Rh, x.xi, x.ph, 0, system.centroid0),
    }
    out = {}
    for name, fn in calls.items():
        n = 2000
        best = np.inf
        for _ in range(repeat):
            t0 = time.perf_counter()
            for _ in range(n):
                fn()
            best = min(best, (time.perf_counter() - t0) / n)
        out[name] = best
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--t-end", type=float, default=30.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    sc = pyramid_preset().with_sim(t_end=args.t_end)
    backends = {"python": PyCoupledKernel}
    compiled = compiled_kernel()
    if compiled is None:
        print("compiled kernel not available; timing the NumPy backend only")
    else:
        backends["cython"] = compiled

    calls, runs, finals = {}, {}, {}
    for name, cls in backends.items():
        calls[name] = per_call(CoupledSystem(sc, kernel_cls=cls), args.repeat)
        t0 = time.perf_counter()
        log, _ = simulate(sc, kernel_cls=cls)
        runs[name] = time.perf_counter() - t0
        finals[name] = log.array()[-1]

    print(f"{'call':<18}" + "".join(f"{b:>14}" for b in backends) + ("      speedup" if len(backends) > 1 else ""))
    for c in calls["python"]:
        row = f"{c:<18}" + "".join(f"{calls[b][c] * 1e6:>11.1f} us" for b in backends)
        if len(backends) > 1:
            row += f"{calls['python'][c] / calls['cython'][c]:>12.1f}x"
        print(row)
    row = f"{'run ' + format(args.t_end, 'g') + ' s':<18}" + "".join(f"{runs[b]:>12.2f} s" for b in backends)
    if len(backends) > 1:
        row += f"{runs['python'] / runs['cython']:>12.1f}x"
        print(row)
        print(f"max |difference| of final logged row: {np.max(np.abs(finals['python'] - finals['cython'])):.3e}")
    else:
        print(row)


if __name__ == "__main__":
    main()
