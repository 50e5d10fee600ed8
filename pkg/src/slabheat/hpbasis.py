"""Multi-level hp basis on box trees.

Shape functions are tensor products of integrated Legendre polynomials.  Every
cell of the tree, leaf or not, can support functions; continuity across level
jumps is obtained without constraint equations by the usual two-step rule:

1. activate the topological components (vertices, edges, faces, ..., interior)
   of every leaf, merging components shared between cells of the same level;
2. deactivate components that touch a coarser leaf, so overlay functions
   vanish on the internal boundaries of refinement patches.

Components are encoded per axis by an integer code: ``2*c`` is the point plane
at integer coordinate ``c`` of the component's level, ``2*c + 1`` the open
interval ``(c, c+1)``.  The code of a shared face is identical from both
sides, which is what merges the unknowns.

A function inherited from an ancestor cell is evaluated on a leaf by composing
the leaf-to-ancestor affine map with the ancestor's tensor product; Jacobians
are diagonal because all cells are axis-aligned boxes.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from .grid import SlabMesh, TreeCell

__all__ = [
    "eval_integrated_legendre",
    "trunk_mask",
    "build_basis",
    "DofMap",
    "evaluate_basis",
]


def eval_integrated_legendre(p: int, x):
    """Values and derivatives of the 1D integrated Legendre basis on [-1, 1].

    Index 0 and 1 are the linear hat functions ``(1 -+ x)/2``; index ``j >= 2``
    is ``(P_j - P_{j-2}) / sqrt(2(2j - 1))`` and vanishes at both endpoints.
    The derivative of index ``j >= 2`` reduces to ``sqrt((2j - 1)/2) P_{j-1}``.

    Returns ``(values, derivatives)`` with leading dimension ``p + 1``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    scalar = np.isscalar(x) or np.asarray(x).ndim == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    n = xv.shape[0]
    vals = np.empty((p + 1, n))
    ders = np.empty((p + 1, n))
    vals[0] = 0.5 * (1.0 - xv)
    vals[1] = 0.5 * (1.0 + xv)
    ders[0] = -0.5
    ders[1] = 0.5
    if p >= 2:
        P = np.empty((p + 1, n))
        P[0] = 1.0
        P[1] = xv
        for j in range(1, p):
            P[j + 1] = ((2 * j + 1) * xv * P[j] - j * P[j - 1]) / (j + 1)
        for j in range(2, p + 1):
            scale = np.sqrt(2.0 * (2 * j - 1))
            vals[j] = (P[j] - P[j - 2]) / scale
            ders[j] = np.sqrt((2 * j - 1) / 2.0) * P[j - 1]
    if scalar:
        return vals[:, 0], ders[:, 0]
    return vals, ders


def trunk_mask(p_space: int, p_time: int, d: int) -> np.ndarray:
    """Boolean mask over the tensor index set retained by the trunk rule.

    Index ``alpha`` is kept iff ``sum_k max(alpha_k - 1, 0)`` does not exceed
    ``max(p_space, p_time) - 1``.  Vertex and single-high-index (edge) modes
    always survive.
    """
    shape = (p_space + 1,) * d + (p_time + 1,)
    mask = np.empty(shape, dtype=bool)
    thresh = max(p_space, p_time) - 1
    for alpha in np.ndindex(shape):
        mask[alpha] = sum(max(a - 1, 0) for a in alpha) <= thresh
    return mask


def _normalize_degrees(degrees) -> list[tuple[int, int]]:
    out = []
    for entry in degrees:
        if isinstance(entry, (tuple, list)):
            ps, pt = int(entry[0]), int(entry[1])
        else:
            ps, pt = int(entry), 1
        if ps < 1 or pt < 1:
            raise ValueError("polynomial degrees must be at least 1")
        out.append((ps, pt))
    if not out:
        raise ValueError("need degrees for at least level 0")
    return out


def _entity_key(cell: TreeCell, sign: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    codes = []
    for p, s in zip(cell.ipos, sign):
        if s < 0:
            codes.append(2 * p)
        elif s > 0:
            codes.append(2 * (p + 1))
        else:
            codes.append(2 * p + 1)
    return (cell.level, tuple(codes))


def _adjacent_positions(codes: tuple[int, ...]) -> Iterable[tuple[int, ...]]:
    """Integer positions of the same-level cells adjacent to an entity."""
    choices = []
    for c in codes:
        if c & 1:
            choices.append((c // 2,))
        else:
            q = c // 2
            choices.append((q - 1, q))
    return itertools.product(*choices)


class DofMap:
    """Global numbering plus per-leaf evaluation data for an hp basis."""

    def __init__(self, mesh: SlabMesh, level_degrees: list[tuple[int, int]], trunk: bool):
        self.mesh = mesh
        self.level_degrees = level_degrees
        self.trunk = trunk
        self.n_dofs = 0
        #: entity key -> (first global index, tuple of interior index tuples)
        self.entity_table: dict[tuple[int, tuple[int, ...]], tuple[int, tuple]] = {}
        self._active: set[tuple[int, tuple[int, ...]]] = set()
        self._leaf_blocks: dict[int, list] = {}
        self._eval_cache: dict = {}

    # -- construction helpers (used by build_basis) ------------------------

    def _entity_functions(self, level: int, codes: tuple[int, ...]) -> tuple:
        dim = self.mesh.grid.dim
        ps, pt = self.level_degrees[level]
        interval_axes = [k for k, c in enumerate(codes) if c & 1]
        if not interval_axes:
            return ((),)
        ranges = []
        for k in interval_axes:
            p = pt if k == dim - 1 else ps
            if p < 2:
                return ()
            ranges.append(range(2, p + 1))
        combos = itertools.product(*ranges)
        if self.trunk:
            thresh = max(ps, pt) - 1
            return tuple(c for c in combos if sum(a - 1 for a in c) <= thresh)
        return tuple(combos)

    # -- queries -----------------------------------------------------------

    def is_active(self, key: tuple[int, tuple[int, ...]]) -> bool:
        return key in self._active

    def degrees_of(self, cell: TreeCell) -> tuple[int, int]:
        return self.level_degrees[cell.level]

    def leaf_max_degrees(self, leaf: TreeCell) -> tuple[int, int]:
        """Largest (space, time) degree among the leaf and its ancestors."""
        ps = max(self.level_degrees[l][0] for l in range(leaf.level + 1))
        pt = max(self.level_degrees[l][1] for l in range(leaf.level + 1))
        return ps, pt

    def leaf_blocks(self, leaf: TreeCell) -> list:
        """Per-ancestor blocks ``(owner, gidx, alphas)`` active on a leaf."""
        return self._leaf_blocks[id(leaf)]

    def leaf_function_count(self, leaf: TreeCell) -> int:
        return sum(block[1].size for block in self._leaf_blocks[id(leaf)])

    def cell_mask(self, cell: TreeCell) -> np.ndarray:
        """Active-function mask over the cell's own tensor-product index set."""
        dim = self.mesh.grid.dim
        ps, pt = self.level_degrees[cell.level]
        shape = (ps + 1,) * (dim - 1) + (pt + 1,)
        mask = np.zeros(shape, dtype=bool)
        keep = trunk_mask(ps, pt, dim - 1) if self.trunk else np.ones(shape, dtype=bool)
        for alpha in np.ndindex(shape):
            if not keep[alpha]:
                continue
            sign = tuple(-1 if a == 0 else (1 if a == 1 else 0) for a in alpha)
            mask[alpha] = _entity_key(cell, sign) in self._active
        return mask

    @staticmethod
    def plane_code(base_coord: int, level: int) -> int:
        """Entity code of the point plane ``base_coord`` (base units) at a level."""
        return 2 * (base_coord << level)

    def plane_function_indices(self, axis: int, base_coord: int) -> np.ndarray:
        """Global indices of all functions living on one base-aligned plane."""
        out = []
        for (level, codes), (start, interiors) in self.entity_table.items():
            if codes[axis] == self.plane_code(base_coord, level):
                out.extend(range(start, start + len(interiors)))
        return np.asarray(sorted(out), dtype=np.int64)

    def plane_entity_keys(self, axis: int, base_coord: int) -> set:
        """(level, codes-without-axis) identifiers of active plane entities."""
        out = set()
        for (level, codes) in self._active:
            if codes[axis] == self.plane_code(base_coord, level):
                out.add((level, codes[:axis] + codes[axis + 1:]))
        return out

    def plane_function_keys(self, axis: int, base_coord: int) -> dict:
        """Mesh-independent keys of plane functions.

        Maps ``(level, reduced codes, interior indices)`` to the global index,
        where the reduced codes drop the plane axis.  Used to hand interface
        values from one slab mesh to the next.
        """
        out = {}
        for (level, codes), (start, interiors) in self.entity_table.items():
            if codes[axis] == self.plane_code(base_coord, level):
                reduced = codes[:axis] + codes[axis + 1:]
                for j, inter in enumerate(interiors):
                    out[(level, reduced, inter)] = start + j
        return out

    def initial_plane_entities(self) -> set:
        t0 = self.mesh.time_root_range[0]
        return self.plane_entity_keys(self.mesh.grid.dim - 1, t0)

    def final_plane_entities(self) -> set:
        """Active entities on the end face of the solved slab region."""
        _, t_end = self.mesh.grid.slab_time_root_range(self.mesh.slab_index)
        return self.plane_entity_keys(self.mesh.grid.dim - 1, t_end)

    def initial_plane_keys(self) -> dict:
        t0 = self.mesh.time_root_range[0]
        return self.plane_function_keys(self.mesh.grid.dim - 1, t0)

    def final_plane_keys(self) -> dict:
        """Functions on the end face of the solved slab (start of the ghost)."""
        _, t_end = self.mesh.grid.slab_time_root_range(self.mesh.slab_index)
        return self.plane_function_keys(self.mesh.grid.dim - 1, t_end)

    # -- evaluation --------------------------------------------------------

    def _tables_1d(self, p: int, nodes: np.ndarray, gap: int, offset: int,
                   cache_key=None):
        """1D tables of an owner's basis at leaf-reference nodes.

        ``gap`` levels separate leaf from owner; ``offset`` is the leaf's
        integer position within the owner along this axis.
        """
        if cache_key is not None:
            key = (p, cache_key, gap, offset)
            hit = self._eval_cache.get(key)
            if hit is not None:
                return hit
        scale = 2.0 ** (-gap)
        mapped = (2 * offset + 1 + nodes) * scale - 1.0
        tables = eval_integrated_legendre(p, mapped)
        if cache_key is not None:
            self._eval_cache[key] = tables
        return tables

    def evaluate_grid(self, leaf: TreeCell, axis_nodes: Sequence[np.ndarray],
                      gauss_key: tuple | None = None):
        """Evaluate all active functions on a tensor grid of leaf-ref nodes.

        Returns ``(gidx, alphas, N, Ndot, G, Gdot)`` where ``N`` and ``Ndot``
        have shape (n, Q), the spatial gradient arrays (n, d, Q); Q runs over
        the tensor grid in row-major order.  Derivatives are physical.
        """
        dim = self.mesh.grid.dim
        d = dim - 1
        counts = tuple(len(a) for a in axis_nodes)
        q_total = int(np.prod(counts))
        blocks = self._leaf_blocks[id(leaf)]
        n_total = sum(b[1].size for b in blocks)
        gidx = np.empty(n_total, dtype=np.int64)
        alphas = np.empty((n_total, dim), dtype=np.int16)
        N = np.empty((n_total, q_total))
        Ndot = np.empty((n_total, q_total))
        G = np.empty((n_total, d, q_total))
        Gdot = np.empty((n_total, d, q_total))
        row = 0
        for owner, bg, ba in blocks:
            nb = bg.size
            if nb == 0:
                continue
            gap = leaf.level - owner.level
            ps, pt = self.level_degrees[owner.level]
            owner_size = owner.hi - owner.lo
            vals = []
            ders = []
            for k in range(dim):
                p_k = pt if k == dim - 1 else ps
                offset = leaf.ipos[k] - (owner.ipos[k] << gap)
                ck = None if gauss_key is None else gauss_key[k]
                V, Dref = self._tables_1d(p_k, axis_nodes[k], gap, offset, ck)
                vals.append(V[ba[:, k]])
                ders.append(Dref[ba[:, k]] * (2.0 / owner_size[k]))
            sl = slice(row, row + nb)
            gidx[sl] = bg
            alphas[sl] = ba
            # Spatial products are shared between the value/time-derivative
            # pair and between each gradient and its time derivative; the
            # chained pairwise products beat one fused contraction by a wide
            # margin on blocks of this size.
            pref = [vals[0]]
            for k in range(1, d):
                pref.append(_pair(pref[-1], vals[k]))
            N[sl] = _pair(pref[-1], vals[d])
            Ndot[sl] = _pair(pref[-1], ders[d])
            for s in range(d):
                c = ders[0] if s == 0 else _pair(pref[s - 1], ders[s])
                for k in range(s + 1, d):
                    c = _pair(c, vals[k])
                G[sl, s] = _pair(c, vals[d])
                Gdot[sl, s] = _pair(c, ders[d])
            row += nb
        return gidx, alphas, N, Ndot, G, Gdot


def _pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise outer product of two per-axis tables, flattened."""
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def evaluate_basis(dofmap: DofMap, leaf: TreeCell, xi: Sequence[float]):
    """Evaluate all functions active on a leaf at one reference point.

    ``xi`` lives in the leaf's reference cube [-1, 1]^dim (time last).
    Returns ``(gidx, N, gradN, Ndot, gradNdot)`` with physical derivatives.
    """
    xi = np.asarray(xi, dtype=float)
    dim = dofmap.mesh.grid.dim
    if xi.shape != (dim,):
        raise ValueError(f"xi must have shape ({dim},)")
    if np.any(xi < -1.0 - 1e-12) or np.any(xi > 1.0 + 1e-12):
        raise ValueError("xi outside the reference cube")
    nodes = [np.asarray([xi[k]]) for k in range(dim)]
    gidx, _, N, Ndot, G, Gdot = dofmap.evaluate_grid(leaf, nodes)
    return gidx, N[:, 0], G[:, :, 0], Ndot[:, 0], Gdot[:, :, 0]


def build_basis(mesh: SlabMesh, degrees, trunk: bool = False,
                initial_plane_keys: Iterable | None = None) -> DofMap:
    """Construct the multi-level hp basis for a slab mesh.

    ``degrees`` assigns (space, time) polynomial degrees per refinement level;
    plain integers mean linear-in-time.  ``initial_plane_keys`` forces the set
    of active entities on the mesh's first time plane, overriding the default
    boundary treatment there; it is how a marching solver makes the incoming
    interface conform to the previous slab's trace space.
    """
    level_degrees = _normalize_degrees(degrees)
    max_level = max(leaf.level for leaf in mesh.leaves)
    if len(level_degrees) <= max_level:
        raise ValueError(
            f"degrees defined up to level {len(level_degrees) - 1} "
            f"but the mesh refines to level {max_level}")
    dofmap = DofMap(mesh, level_degrees, trunk)
    dim = mesh.grid.dim
    signs = list(itertools.product((-1, 0, 1), repeat=dim))

    # Step 1: activate every component of every leaf.
    active = set()
    for leaf in mesh.leaves:
        for sign in signs:
            active.add(_entity_key(leaf, sign))

    # Step 2: deactivate components touching a coarser leaf.  An entity is on
    # the internal boundary of its refinement patch iff some adjacent
    # same-level position inside the domain is not covered by a cell.
    deactivated = set()
    for key in active:
        level, codes = key
        if level == 0:
            continue
        for pos in _adjacent_positions(codes):
            if mesh.in_domain(level, pos) and not mesh.has_cell(level, tuple(pos)):
                deactivated.add(key)
                break
    active -= deactivated

    # Optional override of the incoming time plane with a prescribed trace set.
    if initial_plane_keys is not None:
        t_axis = dim - 1
        t0 = mesh.time_root_range[0]
        active = {
            (level, codes) for (level, codes) in active
            if codes[t_axis] != 2 * (t0 << level)
        }
        for level, reduced in set(initial_plane_keys):
            codes = reduced[:t_axis] + (2 * (t0 << level),) + reduced[t_axis:]
            key = (level, codes)
            covered = False
            for pos in _adjacent_positions(codes):
                if mesh.in_domain(level, pos) and mesh.has_cell(level, tuple(pos)):
                    covered = True
                    break
            if not covered:
                raise RuntimeError(
                    "interface entity has no supporting cell; slab meshes are "
                    "inconsistent at the incoming time plane")
            active.add(key)

    dofmap._active = active

    # Numbering: first encounter along deterministic leaf/ancestor/sign order.
    n = 0
    for leaf in mesh.leaves:
        chain = []
        cell = leaf
        while cell is not None:
            chain.append(cell)
            cell = cell.parent
        for owner in reversed(chain):
            for sign in signs:
                key = _entity_key(owner, sign)
                if key not in active or key in dofmap.entity_table:
                    continue
                interiors = dofmap._entity_functions(key[0], key[1])
                if not interiors:
                    dofmap.entity_table[key] = (n, ())
                    continue
                dofmap.entity_table[key] = (n, interiors)
                n += len(interiors)
    dofmap.n_dofs = n

    # Per-leaf blocks: for every ancestor level, the active functions with
    # tensor indices resolved in that ancestor's frame.
    for leaf in mesh.leaves:
        chain = []
        cell = leaf
        while cell is not None:
            chain.append(cell)
            cell = cell.parent
        blocks = []
        for owner in reversed(chain):
            bg: list[int] = []
            ba: list[tuple[int, ...]] = []
            for sign in signs:
                key = _entity_key(owner, sign)
                entry = dofmap.entity_table.get(key)
                if entry is None:
                    continue
                start, interiors = entry
                interval_axes = [k for k, c in enumerate(key[1]) if c & 1]
                base_alpha = [0 if s < 0 else 1 for s in sign]
                for j, inter in enumerate(interiors):
                    alpha = list(base_alpha)
                    for axis, a in zip(interval_axes, inter):
                        alpha[axis] = a
                    bg.append(start + j)
                    ba.append(tuple(alpha))
            blocks.append((owner,
                           np.asarray(bg, dtype=np.int64),
                           np.asarray(ba, dtype=np.int16).reshape(len(ba), dim)))
        dofmap._leaf_blocks[id(leaf)] = blocks
    return dofmap
