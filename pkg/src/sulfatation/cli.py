"""Command-line driver: ``sulfatation --config run.ini --out-dir out``."""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, config_as_dict, default_config, dump_config, load_config
from .coupled import (
    IntegrationError,
    initial_state,
    integrate,
    oracle_dt_bound,
    oracle_run,
    species_discrepancy,
    system_for,
)
from .output import format_number, write_manifest, write_table
from .postprocess import front_position, gas_total, ph_profile

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4
ORACLE_MAX_STEPS = 2_000_000


def _times(text):
    try:
        return tuple(float(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sulfatation",
        description="Simulate sulfate corrosion of concrete with a two-scale reaction-diffusion model.",
    )
    ap.add_argument("--config", type=Path, help="INI config file (defaults apply to omitted keys)")
    ap.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (created)")
    ap.add_argument("--t-end", type=float, help="final time")
    ap.add_argument("--nx", type=int, help="macro node count")
    ap.add_argument("--ny", type=int, help="micro node count per cell")
    ap.add_argument("--epsilon", type=float, help="front threshold offset below beta_bar")
    ap.add_argument("--snapshots", type=_times, help="comma-separated output times")
    ap.add_argument("--cells", type=_times, help="comma-separated fractions of L for cell profile dumps")
    ap.add_argument("--rel-tol", type=float, help="integrator relative tolerance")
    ap.add_argument("--oracle", action="store_true", help="cross-check against the explicit RK4 oracle")
    ap.add_argument("--backend", choices=["python", "cython"], help="kernel backend")
    return ap


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else default_config()
    time_changes, grid_changes, out_changes = {}, {}, {}
    if args.t_end is not None:
        time_changes["t_end"] = args.t_end
        time_changes["dt_init"] = min(cfg.time.dt_init, args.t_end) if args.t_end > 0 else cfg.time.dt_init
    if args.snapshots is not None:
        time_changes["snapshot_times"] = args.snapshots
    if args.rel_tol is not None:
        time_changes["rel_tol"] = args.rel_tol
    if args.nx is not None:
        grid_changes["nx"] = args.nx
    if args.ny is not None:
        grid_changes["ny"] = args.ny
    if args.epsilon is not None:
        out_changes["epsilon"] = args.epsilon
    if args.cells is not None:
        out_changes["cell_positions"] = args.cells
    if "t_end" in time_changes and "snapshot_times" not in time_changes:
        time_changes["snapshot_times"] = tuple(t for t in cfg.time.snapshot_times if t <= args.t_end)
    return cfg.replace(time=time_changes, grid=grid_changes, output=out_changes)


def _snapshot_times(cfg):
    times = [t for t in cfg.time.snapshot_times if t <= cfg.time.t_end]
    if not times or times[-1] != cfg.time.t_end:
        times.append(cfg.time.t_end)
    return times


def _cell_nodes(cfg):
    nodes = []
    for frac in cfg.output.cell_positions:
        i = int(round(frac * (cfg.grid.nx - 1)))
        if i not in nodes:
            nodes.append(i)
    return nodes


class _Recorder:
    """Collects snapshots and per-step audits while the integrator runs."""

    def __init__(self, cfg, state0, out_dir: Path, backend=None):
        self.cfg = cfg
        self.out = out_dir
        self.sys = system_for(cfg, backend)
        self.total0 = self.sys.sulfur_total(state0.y)
        self.source_integral = 0.0
        self.max_defect = 0.0
        self.max_rel_defect = 0.0
        self.min_value = float(np.min(state0.y))
        self.snapshots = []
        self.steps = []
        self.files = []
        self.cell_nodes = _cell_nodes(cfg)

    def defect(self, state) -> float:
        return self.sys.sulfur_total(state.y) - self.total0 - self.source_integral

    def observe(self, state, stats):
        self.source_integral += stats.net_sulfur_source
        d = self.defect(state)
        total = self.sys.sulfur_total(state.y)
        self.max_defect = max(self.max_defect, abs(d))
        if total > 0:
            self.max_rel_defect = max(self.max_rel_defect, abs(d) / total)
        self.min_value = min(self.min_value, float(np.min(state.y)))
        front = front_position(state, self.cfg).position
        self.steps.append((state.t, stats.dt_taken, stats.newton_iterations, stats.error_estimate, front, d))

    def snapshot(self, t, state):
        cfg = self.cfg
        x = cfg.x
        tag = format_number(t)
        files = [f"u1_{tag}.csv", f"u4_{tag}.csv", f"ph_{tag}.csv"]
        write_table(self.out / files[0], ["x", "u1"], zip(x, state.u1))
        write_table(self.out / files[1], ["x", "u4"], zip(x, state.u4))
        write_table(self.out / files[2], ["x", "pH"], zip(x, ph_profile(state, cfg).ph))
        for i in self.cell_nodes:
            name = f"cell_{tag}_{i}.csv"
            write_table(self.out / name, ["y", "u2", "u3"], zip(cfg.y, state.u2[i], state.u3[i]))
            files.append(name)
        self.snapshots.append((t, state, self.defect(state)))
        self.files.append({"t": t, "files": files})


def _oracle_report(cfg, state0, final, backend=None):
    dt = 0.25 * oracle_dt_bound(cfg)
    steps = math.ceil(cfg.time.t_end / dt) if cfg.time.t_end > 0 else 0
    if steps > ORACLE_MAX_STEPS:
        return {"skipped": f"t_end needs {steps} explicit steps (limit {ORACLE_MAX_STEPS})"}
    if steps == 0:
        return {"dt": dt, "steps": 0, "max_relative_discrepancy": 0.0, "per_species": {}}
    ref = oracle_run(state0, cfg.time.t_end, dt, cfg, backend)
    per = species_discrepancy(final, ref)
    return {"dt": dt, "steps": steps, "max_relative_discrepancy": max(per.values()), "per_species": per}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        backend = kernels.get_backend(args.backend).NAME
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out_dir
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    clock = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        state0 = initial_state(cfg)
        rec = _Recorder(cfg, state0, out, backend)
        cfg_run = cfg.replace(time={"snapshot_times": tuple(_snapshot_times(cfg))})
        final = integrate(state0, cfg_run, sink=rec.snapshot, observer=rec.observe, backend=backend)
        oracle = _oracle_report(cfg, state0, final, backend) if args.oracle else None

        write_table(
            out / "front.csv",
            ["t", "p"],
            ((t, front_position(s, cfg).position) for t, s, _ in rec.snapshots),
        )
        write_table(
            out / "totals.csv",
            ["t", "gas_total", "sulfur_total", "conservation_defect"],
            ((t, gas_total(s, cfg), rec.sys.sulfur_total(s.y), d) for t, s, d in rec.snapshots),
        )
        write_table(
            out / "steps.csv",
            ["t", "dt", "newton_iterations", "error_estimate", "front", "conservation_defect"],
            rec.steps,
        )
        (out / "config.ini").write_text(dump_config(cfg))
        manifest = {
            "code_version": __version__,
            "backend": backend,
            "config": config_as_dict(cfg),
            "snapshots": rec.files,
            "series": ["front.csv", "totals.csv", "steps.csv"],
            "accepted_steps": len(rec.steps),
            "audit": {
                "max_conservation_defect": rec.max_defect,
                "max_relative_conservation_defect": rec.max_rel_defect,
                "min_concentration": rec.min_value,
            },
            "wall_clock": {
                "started": started,
                "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "seconds": time.perf_counter() - clock,
            },
        }
        if oracle is not None:
            manifest["oracle"] = oracle
        write_manifest(out / "manifest.json", manifest)
    except (IntegrationError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
