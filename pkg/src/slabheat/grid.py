"""Structured space-time grids with hierarchical box-tree refinement.

A :class:`SlabMesh` covers one time slab of a (d+1)-dimensional space-time
domain together with the following slab, so that bases built on consecutive
meshes share a conforming interface.  Cells are axis-aligned boxes that refine
isotropically into ``2**(d+1)`` children; arbitrary level jumps between face
neighbors are allowed (no 2:1 balancing).

Integer cell coordinates are global: a cell at refinement level ``l`` occupies
``[ipos_k, ipos_k + 1]`` in units of ``h_k / 2**l`` per axis, where ``h_k`` is
the base element size.  The time axis is the last axis and is indexed from the
start of the simulation, not from the start of the slab, so cells and basis
entities of overlapping meshes agree exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "BOUNDARY",
    "BaseGrid",
    "TreeCell",
    "SlabMesh",
    "build_slab_mesh",
    "refine_cell_decision",
    "round_half_up",
]

#: Hard cap on refinement depth: guards against runaway targets.
MAX_TREE_LEVEL = 25


class _Boundary:
    """Sentinel returned by neighbor queries that leave the domain."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "BOUNDARY"


BOUNDARY = _Boundary()


def round_half_up(x: float) -> int:
    """Round to the closest integer, with .5 rounding away from zero."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class BaseGrid:
    """Tensor-product base discretization of the space-time domain.

    Space is a d-dimensional box split into ``spatial_counts`` elements per
    axis.  Time is split into ``slab_count`` slabs of ``slab_duration`` each,
    with ``elements_per_slab`` base elements inside every slab.
    """

    spatial_origin: tuple[float, ...]
    spatial_extent: tuple[float, ...]
    spatial_counts: tuple[int, ...]
    slab_duration: float
    slab_count: int
    elements_per_slab: int = 1
    start_time: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "spatial_origin", tuple(float(v) for v in self.spatial_origin))
        object.__setattr__(self, "spatial_extent", tuple(float(v) for v in self.spatial_extent))
        object.__setattr__(self, "spatial_counts", tuple(int(v) for v in self.spatial_counts))
        if not (len(self.spatial_origin) == len(self.spatial_extent) == len(self.spatial_counts)):
            raise ValueError("spatial origin, extent and counts must have equal length")
        if len(self.spatial_counts) < 1:
            raise ValueError("need at least one spatial axis")
        if any(n < 1 for n in self.spatial_counts):
            raise ValueError("spatial_counts must be positive")
        if any(e <= 0.0 for e in self.spatial_extent):
            raise ValueError("spatial_extent must be positive")
        if self.slab_duration <= 0.0:
            raise ValueError("slab_duration must be positive")
        if self.slab_count < 1:
            raise ValueError("slab_count must be positive")
        if self.elements_per_slab < 1:
            raise ValueError("elements_per_slab must be positive")

    @property
    def d(self) -> int:
        """Spatial dimension."""
        return len(self.spatial_counts)

    @property
    def dim(self) -> int:
        """Space-time dimension d + 1."""
        return self.d + 1

    @property
    def spacing(self) -> np.ndarray:
        """Base element size per space-time axis (time last)."""
        h = [e / n for e, n in zip(self.spatial_extent, self.spatial_counts)]
        h.append(self.time_element_duration)
        return np.asarray(h)

    @property
    def origin(self) -> np.ndarray:
        """Lower corner of the space-time domain (time last)."""
        return np.asarray(list(self.spatial_origin) + [self.start_time])

    @property
    def time_element_duration(self) -> float:
        return self.slab_duration / self.elements_per_slab

    def slab_start(self, slab_index: int) -> float:
        return self.start_time + slab_index * self.slab_duration

    def slab_time_root_range(self, slab_index: int) -> tuple[int, int]:
        """Half-open range of base time-element indices of one slab."""
        m = self.elements_per_slab
        return slab_index * m, (slab_index + 1) * m

    @property
    def end_time(self) -> float:
        return self.start_time + self.slab_count * self.slab_duration


class TreeCell:
    """Axis-aligned box in space-time, node of a refinement tree."""

    __slots__ = ("level", "ipos", "lo", "hi", "parent", "children")

    def __init__(self, level: int, ipos: tuple[int, ...], lo: np.ndarray, hi: np.ndarray,
                 parent: "TreeCell | None"):
        self.level = level
        self.ipos = ipos
        self.lo = lo
        self.hi = hi
        self.parent = parent
        self.children: tuple[TreeCell, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def root(self) -> "TreeCell":
        cell = self
        while cell.parent is not None:
            cell = cell.parent
        return cell

    @property
    def path_index(self) -> tuple[int, ...]:
        """Integer position of the cell within its root at the cell's level."""
        root = self.root
        shift = self.level
        return tuple(p - (r << shift) for p, r in zip(self.ipos, root.ipos))

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"TreeCell(level={self.level}, ipos={self.ipos})"


def _sample_grid(cell: TreeCell, samples_per_axis: int) -> np.ndarray:
    axes = [np.linspace(cell.lo[k], cell.hi[k], samples_per_axis)
            for k in range(len(cell.ipos))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _as_vectorized_target(target: Callable) -> Callable[[np.ndarray], np.ndarray]:
    """Accept targets written either point-wise or over (N, dim) arrays."""

    def call(points: np.ndarray) -> np.ndarray:
        try:
            vals = np.asarray(target(points), dtype=float)
            if vals.shape == (points.shape[0],):
                return vals
        except (TypeError, ValueError, IndexError):
            pass
        return np.asarray([float(target(p)) for p in points])

    return call


def refine_cell_decision(cell: TreeCell, target: Callable, samples_per_axis: int = 5) -> bool:
    """Decide whether a cell is too coarse for the requested depth.

    The target is sampled on a closed ``samples_per_axis**dim`` grid of the
    cell (endpoints included, so shared faces are sampled identically from
    both sides).  True iff the rounded maximum exceeds the cell's level.
    """
    if not 5 <= samples_per_axis <= 7:
        raise ValueError("samples_per_axis must be in [5, 7]")
    vals = _as_vectorized_target(target)(_sample_grid(cell, samples_per_axis))
    return round_half_up(float(np.max(vals))) > cell.level


class SlabMesh:
    """Refinement forest over one slab plus, when present, the next slab."""

    def __init__(self, grid: BaseGrid, slab_index: int):
        if not 0 <= slab_index < grid.slab_count:
            raise ValueError(f"slab_index {slab_index} outside 0..{grid.slab_count - 1}")
        self.grid = grid
        self.slab_index = slab_index
        self.has_ghost = slab_index + 1 < grid.slab_count
        t_lo, _ = grid.slab_time_root_range(slab_index)
        _, t_hi = grid.slab_time_root_range(slab_index + 1 if self.has_ghost else slab_index)
        #: Half-open range of base time-element indices covered by this mesh.
        self.time_root_range = (t_lo, t_hi)
        self.cells: dict[tuple[int, tuple[int, ...]], TreeCell] = {}
        self.roots: list[TreeCell] = []
        self._leaves: list[TreeCell] | None = None

        origin = grid.origin
        spacing = grid.spacing
        spatial_ranges = [range(n) for n in grid.spatial_counts]
        ipositions = sorted(itertools.product(*spatial_ranges, range(t_lo, t_hi)))
        for ipos in ipositions:
            arr = np.asarray(ipos, dtype=float)
            lo = origin + arr * spacing
            hi = origin + (arr + 1.0) * spacing
            cell = TreeCell(0, ipos, lo, hi, None)
            self.roots.append(cell)
            self.cells[(0, ipos)] = cell

    # -- structure ---------------------------------------------------------

    @property
    def interface_time(self) -> float:
        """Start time of the slab this mesh is solved on."""
        return self.grid.slab_start(self.slab_index)

    @property
    def slab_end_time(self) -> float:
        return self.grid.slab_start(self.slab_index + 1)

    def split(self, cell: TreeCell) -> tuple[TreeCell, ...]:
        """Refine a leaf isotropically into 2**dim children."""
        if cell.children:
            raise ValueError("cell already refined")
        if cell.level >= MAX_TREE_LEVEL:
            raise RuntimeError("refinement exceeded the hard depth cap; check the target")
        dim = self.grid.dim
        half = 0.5 * cell.size
        children = []
        for ci in range(1 << dim):
            off = tuple((ci >> k) & 1 for k in range(dim))
            ipos = tuple(2 * p + o for p, o in zip(cell.ipos, off))
            lo = cell.lo + np.asarray(off) * half
            hi = lo + half
            child = TreeCell(cell.level + 1, ipos, lo, hi, cell)
            self.cells[(child.level, ipos)] = child
            children.append(child)
        cell.children = tuple(children)
        self._leaves = None
        return cell.children

    @property
    def leaves(self) -> list[TreeCell]:
        """All leaves, depth first by root order then child index."""
        if self._leaves is None:
            out: list[TreeCell] = []
            stack: list[TreeCell] = []
            for root in reversed(self.roots):
                stack.append(root)
            while stack:
                cell = stack.pop()
                if cell.is_leaf:
                    out.append(cell)
                else:
                    for child in reversed(cell.children):
                        stack.append(child)
            self._leaves = out
        return self._leaves

    def _time_range_at(self, level: int) -> tuple[int, int]:
        t_lo, t_hi = self.time_root_range
        return t_lo << level, t_hi << level

    def in_domain(self, level: int, ipos: Sequence[int]) -> bool:
        """Whether an integer cell position at a level lies inside the mesh."""
        for k, n in enumerate(self.grid.spatial_counts):
            if not 0 <= ipos[k] < (n << level):
                return False
        t_lo, t_hi = self._time_range_at(level)
        return t_lo <= ipos[-1] < t_hi

    def has_cell(self, level: int, ipos: tuple[int, ...]) -> bool:
        return (level, ipos) in self.cells

    def neighbor(self, cell: TreeCell, axis: int, direction: int):
        """Equal-or-coarser cell across a face, or BOUNDARY.

        ``axis`` counts space-time axes (time last), ``direction`` is +-1.
        """
        if not 0 <= axis < self.grid.dim:
            raise ValueError(f"axis {axis} outside 0..{self.grid.dim - 1}")
        if direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")
        ipos = list(cell.ipos)
        ipos[axis] += direction
        if not self.in_domain(cell.level, ipos):
            return BOUNDARY
        level = cell.level
        pos = tuple(ipos)
        while level >= 0:
            found = self.cells.get((level, pos))
            if found is not None:
                return found
            level -= 1
            pos = tuple(p >> 1 for p in pos)
        raise RuntimeError("tree is missing a root covering an in-domain position")

    def slab_leaves(self) -> list[TreeCell]:
        """Leaves lying in the slab being solved (ghost excluded)."""
        _, t_end = self.grid.slab_time_root_range(self.slab_index)
        out = []
        for leaf in self.leaves:
            if leaf.ipos[-1] < (t_end << leaf.level):
                out.append(leaf)
        return out

    def ghost_leaves(self) -> list[TreeCell]:
        _, t_end = self.grid.slab_time_root_range(self.slab_index)
        return [leaf for leaf in self.leaves if leaf.ipos[-1] >= (t_end << leaf.level)]

    def locate(self, x: Sequence[float], t: float) -> TreeCell:
        """Leaf containing a space-time point (ties resolve to the later/upper cell)."""
        grid = self.grid
        spacing = grid.spacing
        origin = grid.origin
        point = np.asarray(list(x) + [t], dtype=float)
        ipos = []
        t_lo, t_hi = self.time_root_range
        limits = [(0, n) for n in grid.spatial_counts] + [(t_lo, t_hi)]
        for k, (lo_k, hi_k) in enumerate(limits):
            idx = int(math.floor((point[k] - origin[k]) / spacing[k]))
            ipos.append(min(max(idx, lo_k), hi_k - 1))
        cell = self.cells[(0, tuple(ipos))]
        if not (np.all(point >= cell.lo - 1e-9 * spacing) and np.all(point <= cell.hi + 1e-9 * spacing)):
            raise ValueError(f"point {point} outside the mesh")
        while cell.children:
            ci = 0
            for k in range(grid.dim):
                if point[k] >= cell.center[k]:
                    ci |= 1 << k
            cell = cell.children[ci]
        return cell

    def dump_tree(self) -> str:
        """Newline-delimited (level, bounds) listing of every cell, depth first."""
        lines = []
        stack = list(reversed(self.roots))
        while stack:
            cell = stack.pop()
            lo = " ".join(repr(float(v)) for v in cell.lo)
            hi = " ".join(repr(float(v)) for v in cell.hi)
            lines.append(f"{cell.level} {lo} {hi}")
            for child in reversed(cell.children):
                stack.append(child)
        return "\n".join(lines) + "\n"


def build_slab_mesh(grid: BaseGrid, slab_index: int, target: Callable | None = None, *,
                    samples_per_axis: int = 5, max_level: int | None = None) -> SlabMesh:
    """Build the refinement forest for one slab (plus its successor).

    ``target`` maps space-time points to a requested refinement depth; every
    cell whose sampled, rounded target exceeds its level is split, recursively.
    ``None`` leaves the base elements unrefined.  The second covered slab is
    refined by the same rule, so the mesh built later for that slab carries an
    identical leaf set there.
    """
    if not 5 <= samples_per_axis <= 7:
        raise ValueError("samples_per_axis must be in [5, 7]")
    mesh = SlabMesh(grid, slab_index)
    if target is not None:
        vec_target = _as_vectorized_target(target)
        cap = MAX_TREE_LEVEL if max_level is None else min(max_level, MAX_TREE_LEVEL)

        def visit(cell: TreeCell) -> None:
            if cell.level >= cap:
                return
            vals = vec_target(_sample_grid(cell, samples_per_axis))
            if round_half_up(float(np.max(vals))) > cell.level:
                for child in mesh.split(cell):
                    visit(child)

        for root in mesh.roots:
            visit(root)
    mesh.leaves  # finalize deterministic leaf ordering
    return mesh
