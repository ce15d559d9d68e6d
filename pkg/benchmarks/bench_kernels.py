"""Time the compiled and pure-Python kernels on the reference grid.

    python benchmarks/bench_kernels.py [--nx 301 --ny 41 --repeat 20 --t-end 50]
"""

import argparse
import time
import timeit

import numpy as np

from sulfatation import kernels
from sulfatation.config import default_config
from sulfatation.coupled import CoupledState, initial_state, integrate, system_for


def bench_backend(cfg, name, repeat, t_end):
    rng = np.random.default_rng(0)
    nx, ny = cfg.grid.nx, cfg.grid.ny
    y = CoupledState.from_fields(
        0.0, rng.uniform(0, 0.02, nx), rng.uniform(0, 0.01, (nx, ny)), rng.uniform(0, 0.3, (nx, ny)), rng.uniform(0, 0.9, nx)
    ).y
    sys_ = system_for(cfg, name)
    _, da, db = sys_.eta_partials(y)
    b = rng.normal(size=y.size)
    out = {
        "rhs": min(timeit.repeat(lambda: sys_.rhs(y), number=1, repeat=repeat)),
        "eta_partials": min(timeit.repeat(lambda: sys_.eta_partials(y), number=1, repeat=repeat)),
        "solve": min(timeit.repeat(lambda: sys_.solve(0.01, da, db, b), number=1, repeat=repeat)),
    }
    run_cfg = cfg.replace(time={"t_end": t_end, "snapshot_times": ()})
    t0 = time.perf_counter()
    integrate(initial_state(run_cfg), run_cfg, backend=name)
    out["integrate"] = time.perf_counter() - t0
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=301)
    ap.add_argument("--ny", type=int, default=41)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--t-end", type=float, default=50.0, help="horizon of the timed integration")
    args = ap.parse_args()

    cfg = default_config().replace(grid={"nx": args.nx, "ny": args.ny})
    names = kernels.available_backends()
    results = {name: bench_backend(cfg, name, args.repeat, args.t_end) for name in names}
    print(f"grid nx={args.nx} ny={args.ny}, unknowns={args.nx * (2 * args.ny + 2)}")
    print(f"{'kernel':<14}" + "".join(f"{n:>14}" for n in names) + ("    speedup" if len(names) > 1 else ""))
    for key in ("rhs", "eta_partials", "solve", "integrate"):
        row = f"{key:<14}" + "".join(f"{results[n][key] * 1e3:>12.3f}ms" for n in names)
        if "cython" in results and "python" in results:
            row += f"{results['python'][key] / results['cython'][key]:>10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
