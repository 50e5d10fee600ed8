"""Field sampling, melt-pool measurement and file export.

All sampling evaluates the space-time basis directly, so heating rates come
from the temporal derivative of the discretization instead of finite
differences between output times.  Lattice evaluation is grouped by leaf:
the restriction of an axis-aligned lattice to a box is again a tensor grid,
which keeps the inner loops vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hpbasis import DofMap

__all__ = [
    "MeltPoolMetrics",
    "sample_field",
    "melt_pool_dimensions",
    "spatial_integral",
    "export_vtk",
    "write_metrics_csv",
    "steady_window_stats",
]


@dataclass(frozen=True)
class MeltPoolMetrics:
    time: float
    length: float
    width: float
    depth: float
    u_max: float


def _time_slice_leaves(dofmap: DofMap, t: float):
    """Region leaves whose time interval contains ``t``, each point once."""
    leaves = [leaf for leaf in dofmap.mesh.slab_leaves()
              if leaf.lo[-1] <= t < leaf.hi[-1]]
    if not leaves:
        leaves = [leaf for leaf in dofmap.mesh.slab_leaves()
                  if leaf.lo[-1] < t <= leaf.hi[-1]]
    if not leaves:
        raise ValueError(f"time {t} outside the slab's solved range")
    return leaves


def sample_field(dofmap: DofMap, u: np.ndarray, t: float, axes):
    """Temperature and heating rate on a spatial lattice at one time.

    ``axes`` holds one sorted coordinate array per spatial axis; the result
    arrays have shape ``(len(axes[0]), ..., len(axes[-1]))``.  Every lattice
    point must lie inside the domain.
    """
    mesh = dofmap.mesh
    d = mesh.grid.d
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != d:
        raise ValueError(f"need {d} lattice axes")
    shape = tuple(len(a) for a in axes)
    U = np.full(shape, np.nan)
    Ud = np.full(shape, np.nan)
    counts = mesh.grid.spatial_counts
    for leaf in _time_slice_leaves(dofmap, t):
        idx = []
        for k in range(d):
            hi_closed = (leaf.ipos[k] + 1) == (counts[k] << leaf.level)
            if hi_closed:
                sel = (axes[k] >= leaf.lo[k]) & (axes[k] <= leaf.hi[k])
            else:
                sel = (axes[k] >= leaf.lo[k]) & (axes[k] < leaf.hi[k])
            idx.append(np.flatnonzero(sel))
        if any(i.size == 0 for i in idx):
            continue
        size = leaf.hi - leaf.lo
        nodes = [2.0 * (axes[k][idx[k]] - leaf.lo[k]) / size[k] - 1.0
                 for k in range(d)]
        nodes.append(np.asarray([2.0 * (t - leaf.lo[-1]) / size[-1] - 1.0]))
        gidx, _, N, Ndot, _, _ = dofmap.evaluate_grid(leaf, nodes)
        ue = u[gidx]
        block = tuple(len(i) for i in idx)
        U[np.ix_(*idx)] = (ue @ N).reshape(block)
        Ud[np.ix_(*idx)] = (ue @ Ndot).reshape(block)
    if np.isnan(U).any():
        raise ValueError("lattice extends outside the computational domain")
    return U, Ud


def _crossing_points(axes, W, axis):
    """Zero crossings of W along one lattice axis, as full coordinates."""
    lo = W.take(range(W.shape[axis] - 1), axis=axis)
    hi = W.take(range(1, W.shape[axis]), axis=axis)
    cross = lo * hi < 0.0
    if not np.any(cross):
        return np.zeros((0, W.ndim))
    idx = np.nonzero(cross)
    frac = lo[idx] / (lo[idx] - hi[idx])
    cols = []
    for k in range(W.ndim):
        xk = axes[k][idx[k]]
        if k == axis:
            xk = xk + frac * (axes[k][idx[k] + 1] - xk)
        cols.append(xk)
    return np.stack(cols, axis=1)


def melt_pool_dimensions(axes, U, solidus: float, travel_dir=None,
                         t: float = 0.0, open_top: bool = False) -> MeltPoolMetrics:
    """Bounding extents of the molten region ``u >= solidus``.

    The region boundary is sharpened by linear interpolation along lattice
    edges that cross the solidus.  Length is measured along the in-plane
    travel direction, width transverse to it, depth along the last axis.
    Raises when the molten region touches the lattice boundary, since the
    extents would then be clipped; with ``open_top`` the upper edge of the
    last axis is exempt, for lattices whose top row lies on the heated
    surface that the pool is expected to reach.
    """
    d = len(axes)
    u_max = float(np.max(U))
    melt = U >= solidus
    if not melt.any():
        return MeltPoolMetrics(t, 0.0, 0.0, 0.0, u_max)
    for k in range(d):
        edges = [0] if (open_top and k == d - 1) else [0, -1]
        if melt.take(edges, axis=k).any():
            raise ValueError("molten region touches the sampling lattice edge")
    inside = np.stack([axes[k][i] for k, i in enumerate(np.nonzero(melt))],
                      axis=1)
    W = U - solidus
    pts = np.concatenate([inside] +
                         [_crossing_points(axes, W, k) for k in range(d)])
    plane = pts[:, : d - 1]
    if travel_dir is None:
        e = np.zeros(max(d - 1, 1))
        e[0] = 1.0
    else:
        e = np.asarray(travel_dir, dtype=float)
        e = e / np.linalg.norm(e)
    along = plane @ e if d > 1 else np.zeros(len(pts))
    length = float(along.max() - along.min())
    if d == 3:
        perp = plane @ np.asarray([-e[1], e[0]])
        width = float(perp.max() - perp.min())
    else:
        width = 0.0
    depth = float(pts[:, -1].max() - pts[:, -1].min())
    return MeltPoolMetrics(t, length, width, depth, u_max)


def spatial_integral(dofmap: DofMap, u: np.ndarray, t: float,
                     n_extra: int = 1) -> float:
    """Integral of the temperature over the spatial domain at one time."""
    from .assembly import _gauss
    total = 0.0
    d = dofmap.mesh.grid.d
    for leaf in _time_slice_leaves(dofmap, t):
        ps, _ = dofmap.leaf_max_degrees(leaf)
        x, wk = _gauss(ps + 1 + n_extra)
        size = leaf.hi - leaf.lo
        nodes = [x] * d + [np.asarray([2.0 * (t - leaf.lo[-1]) / size[-1] - 1.0])]
        gidx, _, N, _, _, _ = dofmap.evaluate_grid(leaf, nodes)
        w = np.asarray([1.0])
        for k in range(d):
            w = np.multiply.outer(w, wk).ravel()
        w = w * np.prod(size[:-1] / 2.0)
        total += float((u[gidx] @ N) @ w)
    return total


_VTK_CELL_TYPES = {1: 3, 2: 8, 3: 11}   # LINE, PIXEL, VOXEL


def export_vtk(path, dofmap: DofMap, u: np.ndarray, t: float, title="slab field"):
    """Write one time slice as a legacy ASCII VTK unstructured grid.

    Cells are the spatial traces of the space-time leaves at ``t`` (so the
    refinement pattern is visible); point data carries ``temperature`` and
    ``dT_dt``.  Corner points shared between cells are emitted once.
    """
    mesh = dofmap.mesh
    d = mesh.grid.d
    leaves = _time_slice_leaves(dofmap, t)
    max_level = max(leaf.level for leaf in leaves)
    points: dict[tuple, int] = {}
    coords: list[np.ndarray] = []
    values: list[tuple[float, float]] = []
    cells = []
    corner_xi = [np.asarray([-1.0, 1.0])] * d
    for leaf in leaves:
        size = leaf.hi - leaf.lo
        nodes = corner_xi + [np.asarray([2.0 * (t - leaf.lo[-1]) / size[-1] - 1.0])]
        gidx, _, N, Ndot, _, _ = dofmap.evaluate_grid(leaf, nodes)
        ue = u[gidx]
        uc = ue @ N
        uc_dot = ue @ Ndot
        ids = []
        shift = max_level - leaf.level
        # VTK voxel ordering varies x fastest; our tensor grids vary the
        # last axis fastest, hence the bit reversal in the corner index.
        for corner in range(2 ** d):
            offs = [(corner >> k) & 1 for k in range(d)]
            key = tuple((leaf.ipos[k] + offs[k]) << shift for k in range(d))
            pid = points.get(key)
            if pid is None:
                pid = len(coords)
                points[key] = pid
                coords.append(np.asarray(
                    [leaf.lo[k] + offs[k] * size[k] for k in range(d)]))
                flat = sum(offs[k] << (d - 1 - k) for k in range(d))
                values.append((uc[flat], uc_dot[flat]))
            ids.append(pid)
        cells.append(ids)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title} t={t!r}\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(coords)} double\n")
        for c in coords:
            row = list(c) + [0.0] * (3 - d)
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        n_cells = len(cells)
        fh.write(f"CELLS {n_cells} {n_cells * (1 + 2 ** d)}\n")
        for ids in cells:
            fh.write(" ".join(str(i) for i in [len(ids)] + ids) + "\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        for _ in cells:
            fh.write(f"{_VTK_CELL_TYPES[d]}\n")
        fh.write(f"POINT_DATA {len(coords)}\n")
        fh.write("SCALARS temperature double 1\nLOOKUP_TABLE default\n")
        for v, _ in values:
            fh.write(f"{float(v)!r}\n")
        fh.write("SCALARS dT_dt double 1\nLOOKUP_TABLE default\n")
        for _, v in values:
            fh.write(f"{float(v)!r}\n")


def steady_window_stats(rows, window):
    """Mean and standard deviation of metrics within a time window."""
    t0, t1 = window
    sel = [r for r in rows if t0 <= r.time <= t1]
    out = {}
    for name in ("length", "width", "depth"):
        vals = np.asarray([getattr(r, name) for r in sel])
        out[f"{name}_mean"] = float(vals.mean()) if vals.size else 0.0
        out[f"{name}_std"] = float(vals.std()) if vals.size else 0.0
    out["window"] = (t0, t1)
    out["samples"] = len(sel)
    return out


def write_metrics_csv(path, rows, steady: dict | None = None):
    """CSV time series of melt-pool metrics, SI units, one row per time."""
    with open(path, "w") as fh:
        fh.write("time,length,width,depth,u_max\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in
                              (r.time, r.length, r.width, r.depth, r.u_max))
                     + "\n")
        if steady is not None:
            t0, t1 = steady["window"]
            fh.write(f"# steady window [{t0!r}, {t1!r}] "
                     f"({steady['samples']} samples)\n")
            for name in ("length", "width", "depth"):
                fh.write(f"# steady {name}: mean {steady[f'{name}_mean']!r} "
                         f"std {steady[f'{name}_std']!r}\n")
