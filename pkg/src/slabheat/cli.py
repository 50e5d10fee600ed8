"""Command line entry point.

Subcommands:

* ``run <config.json>``: march a configured problem, writing slab logs,
  melt-pool metrics, restart checkpoints and VTK snapshots.
* ``verify <suite>``: built-in correctness checks against closed-form
  solutions (convergence tables, theta-scheme cross-check).
* ``bench <preset>``: packaged benchmark setups with convenience flags
  for the common parameter overrides.

Only the standard library is imported at module level: ``--threads`` must
take effect through the BLAS environment variables before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

__all__ = ["main"]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threads", type=int, default=None,
                        help="linear algebra thread count (default: library "
                             "choice)")
    parser.add_argument("--output-dir", default=None,
                        help="directory for all output files")
    parser.add_argument("--log-level", default="info",
                        choices=("debug", "info", "warning", "error"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slabheat",
        description="space-time finite element solver for moving-laser "
                    "heat problems")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="march a problem from a JSON config")
    p_run.add_argument("config", help="path to the JSON configuration")
    p_run.add_argument("--restart", default=None,
                       help="checkpoint file to resume after")
    p_run.add_argument("--max-slabs", type=int, default=None,
                       help="advance at most this many slabs")
    _common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_ver = sub.add_parser("verify", help="built-in correctness checks")
    p_ver.add_argument("suite", choices=("convergence", "theta", "all"))
    p_ver.add_argument("--levels", type=int, default=4,
                       help="refinement levels per convergence table")
    _common(p_ver)
    p_ver.set_defaults(func=_cmd_verify)

    p_bench = sub.add_parser("bench", help="packaged benchmark setups")
    p_bench.add_argument("preset",
                         help="amb2018-02[-coarse|-fine] or hatched-square")
    p_bench.add_argument("--coarse", action="store_true",
                         help="coarse discretization (default)")
    p_bench.add_argument("--fine", action="store_true",
                         help="well-resolved discretization")
    p_bench.add_argument("--track-length", default=None, metavar="LEN",
                         help="shorten the laser track (e.g. 3mm), centered "
                              "in the plate; slab count follows")
    p_bench.add_argument("--liquidus", default=None, metavar="TEMP",
                         help="override the liquidus temperature (e.g. 1550C)")
    p_bench.add_argument("--mushy-scale", default=None, metavar="S",
                         help="phase change regularization scale factor")
    p_bench.add_argument("--no-latent", action="store_true",
                         help="drop the latent heat contribution")
    p_bench.add_argument("--slabs", type=int, default=None,
                         help="override the slab count")
    p_bench.add_argument("--max-slabs", type=int, default=None,
                         help="advance at most this many slabs")
    p_bench.add_argument("--restart", default=None,
                         help="checkpoint file to resume after")
    p_bench.add_argument("--set", action="append", default=[], metavar="K=V",
                         help="dotted config override, e.g. "
                              "output.vtk_times_per_slab=2")
    p_bench.add_argument("--dump-config", action="store_true",
                         help="print the resolved config as JSON and exit")
    _common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def _setup(args) -> None:
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _cmd_run(args) -> int:
    from .config import ConfigError, load_config
    from .runner import execute_run
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.output_dir or cfg.output.directory
    summary = execute_run(cfg, out_dir, restart=args.restart,
                          max_slabs=args.max_slabs)
    print(f"completed {summary['slabs_completed']} slabs "
          f"in {summary['total_wall_seconds']:.1f} s; "
          f"outputs in {out_dir}")
    return 0


def _fmt_rate(value) -> str:
    return "    -" if value != value else f"{value:5.2f}"


def _cmd_verify(args) -> int:
    from .verify import convergence_study

    out_dir = Path(args.output_dir or "verify-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = False

    if args.suite in ("convergence", "all"):
        for d, degree in ((1, 1), (1, 2), (2, 2)):
            levels = args.levels if d == 1 else max(2, args.levels - 1)
            rows = convergence_study(d, degree, levels)
            print(f"\nconvergence, {d}D space, degree {degree}:")
            print("  cells  unknowns       L2 error   rate")
            with open(out_dir / f"convergence_d{d}_p{degree}.csv", "w") as fh:
                fh.write("level,cells,unknowns,error,rate\n")
                for r in rows:
                    print(f"  {r['cells']:5d}  {r['unknowns']:8d}  "
                          f"{r['error']:13.6e}  {_fmt_rate(r['rate'])}")
                    fh.write(f"{r['level']},{r['cells']},{r['unknowns']},"
                             f"{r['error']!r},{r['rate']!r}\n")
            rate = rows[-1]["rate"]
            ok = rate >= degree - 0.15
            print(f"  observed rate {rate:.2f} vs expected {degree}: "
                  f"{'PASS' if ok else 'FAIL'}")
            failed |= not ok

    if args.suite in ("theta", "all"):
        from .verify import crank_nicolson_gap
        worst = crank_nicolson_gap()
        ok = worst < 1e-9
        print(f"\ntheta cross-check: max |lowest-order space-time - "
              f"Crank-Nicolson| = {worst:.3e}: {'PASS' if ok else 'FAIL'}")
        failed |= not ok

    return 1 if failed else 0


def _cmd_bench(args) -> int:
    from .config import (ConfigError, apply_overrides, parse_config,
                         parse_quantity, preset_config)
    from .runner import execute_run

    name = args.preset
    if name == "amb2018-02":
        name += "-fine" if args.fine else "-coarse"
    try:
        data = preset_config(name)
        if args.track_length is not None:
            _shorten_track(data, parse_quantity(args.track_length,
                                                "--track-length"))
        if args.liquidus is not None:
            data.setdefault("material", {})["liquidus"] = \
                parse_quantity(args.liquidus, "--liquidus")
        if args.mushy_scale is not None:
            data.setdefault("material", {})["mushy_scale"] = \
                parse_quantity(args.mushy_scale, "--mushy-scale")
        if args.no_latent:
            data.setdefault("material", {})["latent_heat"] = 0.0
        if args.slabs is not None:
            data["time"]["slab_count"] = args.slabs
        data = apply_overrides(data, args.set)
        cfg = parse_config(data)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        from .config import config_to_dict
        print(json.dumps(config_to_dict(cfg), indent=2))
        return 0
    out_dir = args.output_dir or f"{name}-out"
    summary = execute_run(cfg, out_dir, restart=args.restart,
                          max_slabs=args.max_slabs)
    print(f"completed {summary['slabs_completed']} slabs "
          f"in {summary['total_wall_seconds']:.1f} s; "
          f"outputs in {out_dir}")
    if summary["steady"]:
        s = summary["steady"]
        print(f"steady melt pool ({s['samples']} samples): "
              f"length {s['length_mean'] * 1e6:.1f} um, "
              f"width {s['width_mean'] * 1e6:.1f} um, "
              f"depth {s['depth_mean'] * 1e6:.1f} um")
    return 0


def _shorten_track(data: dict, track: float) -> None:
    """Center a shortened single-stroke track; slab count follows duration."""
    from .config import ConfigError, parse_quantity
    path = data.get("path")
    if not path or "vertices" not in path or len(path["vertices"]) != 2:
        raise ConfigError("--track-length needs a two-vertex path preset")
    ox = parse_quantity(data["domain"]["origin"][0], "domain.origin[0]")
    ex = parse_quantity(data["domain"]["extent"][0], "domain.extent[0]")
    y = path["vertices"][0][1]
    x0 = ox + (ex - track) / 2.0
    path["vertices"] = [[x0, y], [x0 + track, y]]
    speed = parse_quantity(path["speed"], "path.speed")
    duration = track / speed
    dt = parse_quantity(data["time"]["slab_duration"], "time.slab_duration")
    import math
    data["time"]["slab_count"] = max(1, math.ceil(duration / dt - 1e-9))


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
