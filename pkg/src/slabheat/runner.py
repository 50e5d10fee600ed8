"""Run orchestration: march a configured problem and write its outputs.

Separated from the CLI so programmatic callers (tests, scripts) get the
same file layout: resolved config, per-slab log, restart checkpoints,
melt-pool time series with steady-window statistics, VTK snapshots and a
machine-readable summary.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from .config import RunConfig, config_to_dict
from .physics import LaserPath, beam_source
from .postprocess import (MeltPoolMetrics, export_vtk, melt_pool_dimensions,
                          sample_field, steady_window_stats, write_metrics_csv)
from .refinement import source_target
from .solver import MarchProblem, load_state, march, save_state

__all__ = [
    "problem_from_config",
    "steady_window",
    "sample_melt_metrics",
    "execute_run",
]

log = logging.getLogger(__name__)


def problem_from_config(cfg: RunConfig) -> MarchProblem:
    source = None
    target = None
    if cfg.beam is not None and cfg.path is not None:
        beam, path = cfg.beam, cfg.path
        source = lambda x, t: beam_source(beam, path, x, t)
    if cfg.schedule is not None and cfg.path is not None:
        surface = cfg.beam.surface if cfg.beam is not None else 0.0
        target = source_target(cfg.schedule, cfg.path, surface)
    return MarchProblem(
        grid=cfg.grid, degrees=list(cfg.degrees), material=cfg.material,
        trunk=cfg.trunk, source=source, target=target,
        initial_temperature=cfg.initial_temperature,
        quadrature=cfg.quadrature, samples_per_axis=cfg.samples_per_axis,
        settings=cfg.settings)


def steady_window(path: LaserPath, fraction: float = 0.3):
    """Trailing fraction of the beam-on interval, for steady-state stats."""
    t0, t1 = path.times[0], path.end_time
    return (t1 - fraction * (t1 - t0), t1)


def _segment_direction(path: LaserPath, t: float):
    for p0, p1, t0, t1 in path.segments():
        if t0 <= t <= t1:
            v = np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)
            return v / np.linalg.norm(v)
    return None


def _melt_axes(cfg: RunConfig, pos, direction):
    """Axis-aligned sampling lattice around the beam, clipped to the domain.

    The lattice covers the oriented box [-back, front] along travel and
    +-half_width across it (interval arithmetic per axis, so any travel
    direction works), plus [surface - depth, surface] along the last axis.
    """
    g, o = cfg.grid, cfg.output
    d = g.d
    surface = cfg.beam.surface if cfg.beam is not None else 0.0
    lo = np.empty(d)
    hi = np.empty(d)
    e = np.asarray(direction, dtype=float)
    perp = np.array([-e[1], e[0]]) if d == 3 else np.zeros(max(d - 1, 1))
    for j in range(d - 1):
        along = (-o.melt_back * e[j], o.melt_front * e[j])
        across = (-o.melt_half_width * perp[j], o.melt_half_width * perp[j])
        lo[j] = pos[j] + min(along) + min(across)
        hi[j] = pos[j] + max(along) + max(across)
    lo[d - 1] = surface - o.melt_depth
    hi[d - 1] = surface
    dom_lo = np.asarray(g.spatial_origin)
    dom_hi = dom_lo + np.asarray(g.spatial_extent)
    lo = np.maximum(lo, dom_lo)
    hi = np.minimum(hi, dom_hi)
    if np.any(hi - lo <= 0):
        return None
    return tuple(
        np.linspace(lo[j], hi[j],
                    max(2, int(round((hi[j] - lo[j]) / o.melt_spacing)) + 1))
        for j in range(d))


def sample_melt_metrics(cfg: RunConfig, dofmap, u, t: float,
                        threshold: float) -> MeltPoolMetrics | None:
    """Melt-pool box extents at one time, or None when the beam is off."""
    pos, on = cfg.path.position(t)
    if not on:
        return None
    direction = _segment_direction(cfg.path, t)
    if direction is None:
        return None
    axes = _melt_axes(cfg, pos, direction)
    if axes is None:
        return None
    U, _ = sample_field(dofmap, u, t, axes)
    return melt_pool_dimensions(axes, U, threshold, travel_dir=direction,
                                t=t, open_top=True)


def _cadence_times(grid, slab_index: int, cadence: float):
    t0 = grid.slab_start(slab_index)
    t1 = t0 + grid.slab_duration
    i0 = math.ceil((t0 - grid.start_time) / cadence - 1e-9)
    out = []
    t = grid.start_time + i0 * cadence
    while t < t1 - 1e-12 * grid.slab_duration:
        if t >= t0:
            out.append(t)
        t += cadence
    return out


def execute_run(cfg: RunConfig, out_dir, restart=None,
                max_slabs: int | None = None) -> dict:
    """March the configured problem, writing all outputs below ``out_dir``.

    ``restart`` names a checkpoint written by a previous run; the march
    resumes at the following slab.  ``max_slabs`` caps how many slabs this
    invocation advances (the checkpoints make the run resumable).
    Returns the summary dict that is also written to ``summary.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_to_dict(cfg), indent=2) + "\n")

    problem = problem_from_config(cfg)
    grid = cfg.grid
    start_slab, trace, entities = 0, None, None
    if restart is not None:
        idx, trace, entities = load_state(restart)
        start_slab = idx + 1
        log.info("restarting after slab %d", idx)
    last_slab = grid.slab_count if max_slabs is None else \
        min(grid.slab_count, start_slab + max_slabs)

    threshold = cfg.material.solidus
    slab_rows = []
    metrics: list[MeltPoolMetrics] = []
    with open(out / "slab_log.csv", "w") as slab_csv:
        slab_csv.write("slab,unknowns,newton_iterations,"
                       "residual_first,residual_last,wall_seconds\n")
        for dofmap, state in march(problem, start_slab, trace, entities):
            k = state.slab_index
            r_first = state.residual_history[0]
            r_last = state.residual_history[-1]
            slab_csv.write(f"{k},{state.n_unknowns},{state.newton_iterations},"
                           f"{r_first!r},{r_last!r},{state.wall_time!r}\n")
            slab_csv.flush()
            slab_rows.append({"slab": k, "unknowns": state.n_unknowns,
                              "newton_iterations": state.newton_iterations,
                              "wall_seconds": state.wall_time})

            t0 = grid.slab_start(k)
            n_vtk = cfg.output.vtk_times_per_slab
            for i in range(1, n_vtk + 1):
                t = t0 + grid.slab_duration * i / n_vtk
                export_vtk(out / f"field_{k:04d}_{i:02d}.vtk", dofmap,
                           state.coefficients, t)
            if cfg.output.metrics_cadence > 0 and cfg.path is not None:
                for t in _cadence_times(grid, k, cfg.output.metrics_cadence):
                    m = sample_melt_metrics(cfg, dofmap, state.coefficients,
                                            t, threshold)
                    if m is not None:
                        metrics.append(m)
            if cfg.output.save_state:
                save_state(out / f"state_{k:04d}.npz", k,
                           state.interface_values,
                           dofmap.final_plane_entities())
            if k + 1 >= last_slab:
                break

    steady = None
    if metrics:
        if cfg.path is not None:
            steady = steady_window_stats(metrics, steady_window(cfg.path))
        write_metrics_csv(out / "melt_pool.csv", metrics, steady)

    unknowns = [r["unknowns"] for r in slab_rows]
    summary = {
        "slabs_completed": len(slab_rows),
        "first_slab": start_slab,
        "last_slab": slab_rows[-1]["slab"] if slab_rows else None,
        "total_wall_seconds": float(sum(r["wall_seconds"] for r in slab_rows)),
        "unknowns_min": min(unknowns) if unknowns else 0,
        "unknowns_max": max(unknowns) if unknowns else 0,
        "slab_log": slab_rows,
        "steady": steady,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
