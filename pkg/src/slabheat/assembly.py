"""Space-time weak form assembly on one slab.

The trial space is continuous in space and time; tests are the time
derivatives of the trial functions, which makes the mass-like term first
order in time and decouples consecutive slabs once the trailing constant
part of each temporal test derivative is zeroed (``modify_tests``).  With
insulated boundaries the residual of element ``E`` reads

    R_i = int_E  dN_i/dt * c(u) du/dt  +  grad(dN_i/dt) . k(u) grad(u)
                 -  dN_i/dt * f   dx dt

and the tangent contains the extra ``c'(u) du/dt N_j`` and
``k'(u) grad(u) N_j`` products of the chain rule.

Assembly runs leaf by leaf in a fixed order into a sparsity pattern built
once per slab, so repeated Newton iterations only rewrite the value array.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hpbasis import DofMap
from .physics import Material, conductivity, heat_capacity

__all__ = ["SlabSystem", "quadrature_counts", "project_plane"]


@lru_cache(maxsize=None)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def quadrature_counts(dofmap: DofMap, leaf, mode: str) -> tuple:
    """Gauss point counts per axis for a leaf.

    ``sufficient`` uses p+1 points per spatial axis and p in time, which is
    exact for the bilinear terms at constant coefficients; ``over`` adds one
    point per axis to damp the variable-coefficient quadrature error.
    """
    ps, pt = dofmap.leaf_max_degrees(leaf)
    d = dofmap.mesh.grid.d
    if mode == "sufficient":
        return (ps + 1,) * d + (max(pt, 1),)
    if mode == "over":
        return (ps + 2,) * d + (pt + 1,)
    raise ValueError(f"unknown quadrature mode {mode!r}")


def _leaf_quadrature(leaf, counts):
    """Nodes per axis, tensor weights (flat), physical points and times."""
    nodes = [_gauss(c)[0] for c in counts]
    size = leaf.hi - leaf.lo
    w = np.asarray([1.0])
    for c in counts:
        w = np.multiply.outer(w, _gauss(c)[1]).ravel()
    w = w * np.prod(size / 2.0)
    axes = [leaf.lo[k] + 0.5 * (nodes[k] + 1.0) * size[k] for k in range(len(counts))]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return nodes, w, pts[:, :-1], pts[:, -1]


class SlabSystem:
    """Residual and tangent of one slab, condensed to its free unknowns.

    ``fixed`` lists global functions whose coefficients are prescribed
    (initial time face, Dirichlet planes); they are removed from the solved
    system and enter through their values in the full coefficient vector.
    Functions supported only on the ghost region are not assembled and are
    excluded from the free set as well.
    """

    def __init__(self, dofmap: DofMap, source=None, quadrature: str = "over",
                 modify_tests: bool = True, fixed=()):
        self.dofmap = dofmap
        self.modify_tests = modify_tests
        self._contexts = []
        leaves = list(dofmap.mesh.slab_leaves())

        for leaf in leaves:
            mode = quadrature
            if mode == "auto":
                counts = quadrature_counts(dofmap, leaf, "over")
                _, w, x, t = _leaf_quadrature(leaf, counts)
                f = source(x, t) if source is not None else None
                if f is None or not np.any(f):
                    counts = quadrature_counts(dofmap, leaf, "sufficient")
                    _, w, x, t = _leaf_quadrature(leaf, counts)
                    f = None
            else:
                counts = quadrature_counts(dofmap, leaf, mode)
                _, w, x, t = _leaf_quadrature(leaf, counts)
                f = source(x, t) if source is not None else None
                if f is not None and not np.any(f):
                    f = None
            self._contexts.append((leaf, counts, w, f))

        seen = np.zeros(dofmap.n_dofs, dtype=bool)
        for leaf in leaves:
            for _, bg, _ in dofmap.leaf_blocks(leaf):
                seen[bg] = True
        fixed = np.asarray(list(fixed), dtype=np.int64)
        fixed_mask = np.zeros(dofmap.n_dofs, dtype=bool)
        fixed_mask[fixed] = True
        self.fixed_mask = fixed_mask
        self.free_indices = np.flatnonzero(seen & ~fixed_mask)
        self.n_free = self.free_indices.size
        self._g2f = np.full(dofmap.n_dofs, -1, dtype=np.int64)
        self._g2f[self.free_indices] = np.arange(self.n_free)

        # Per-leaf test rows (free, and surviving test modification) and
        # trial columns (free); products and scatters are restricted to them.
        self._index_sets = []
        for leaf, _, _, _ in self._contexts:
            blocks = [(bg, ba) for _, bg, ba in dofmap.leaf_blocks(leaf)
                      if bg.size]
            fi = np.concatenate([self._g2f[bg] for bg, _ in blocks]) if blocks \
                else np.empty(0, dtype=np.int64)
            keep = fi >= 0
            cols = np.flatnonzero(keep)
            if self.modify_tests and blocks:
                alpha_t = np.concatenate([ba[:, -1] for _, ba in blocks])
                keep = keep & (alpha_t != 0)
            rows = np.flatnonzero(keep)
            self._index_sets.append((rows, cols, fi[rows], fi[cols]))
        self._build_structure()

    def _build_structure(self):
        nf = self.n_free
        chunks: list[np.ndarray] = []
        merged = np.empty(0, dtype=np.int64)
        pending = 0
        for (_, _, fr, fc) in self._index_sets:
            if fr.size == 0 or fc.size == 0:
                continue
            codes = (fr[:, None] * nf + fc[None, :]).ravel()
            chunks.append(np.unique(codes))
            pending += chunks[-1].size
            if pending > 5_000_000:
                merged = np.unique(np.concatenate([merged] + chunks))
                chunks, pending = [], 0
        pair_codes = np.unique(np.concatenate([merged] + chunks)) if chunks \
            else merged
        self._pair_codes = pair_codes
        rows = (pair_codes // nf) if nf else pair_codes
        self._csr_indices = (pair_codes % nf).astype(np.int32) if nf \
            else pair_codes.astype(np.int32)
        self._csr_indptr = np.searchsorted(rows, np.arange(nf + 1)).astype(np.int64)

    @property
    def n_nonzeros(self) -> int:
        return self._pair_codes.size

    def _element_state(self, leaf, counts, u_full):
        gidx, alphas, N, Ndot, G, Gdot = self.dofmap.evaluate_grid(
            leaf, [_gauss(c)[0] for c in counts], gauss_key=counts)
        u_e = u_full[gidx]
        uq = u_e @ N
        udq = u_e @ Ndot
        guq = np.tensordot(u_e, G, (0, 0))
        return N, Ndot, G, Gdot, uq, udq, guq

    def residual(self, u_full: np.ndarray, material: Material) -> np.ndarray:
        """Assembled residual on the free unknowns."""
        R = np.zeros(self.n_free)
        for (leaf, counts, w, f), (rows, _, fr, _) in zip(self._contexts,
                                                          self._index_sets):
            if rows.size == 0:
                continue
            N, Ndot, G, Gdot, uq, udq, guq = \
                self._element_state(leaf, counts, u_full)
            c, _ = heat_capacity(material, uq)
            k, _ = conductivity(material, uq)
            rhs = c * udq if f is None else c * udq - f
            r = Ndot[rows] @ (w * rhs) \
                + Gdot[rows].reshape(rows.size, -1) @ ((w * k) * guq).ravel()
            R[fr] += r
        return R

    def assemble(self, u_full: np.ndarray, material: Material):
        """Residual and tangent matrix (CSR) on the free unknowns."""
        R = np.zeros(self.n_free)
        data = np.zeros(self.n_nonzeros)
        nf = self.n_free
        for (leaf, counts, w, f), (rows, cols, fr, fc) in zip(self._contexts,
                                                              self._index_sets):
            if rows.size == 0:
                continue
            N, Ndot, G, Gdot, uq, udq, guq = \
                self._element_state(leaf, counts, u_full)
            c, dc = heat_capacity(material, uq)
            k, dk = conductivity(material, uq)
            Wt = Ndot[rows] * w
            WG = Gdot[rows] * w
            rhs = c * udq if f is None else c * udq - f
            r = Wt @ rhs + WG.reshape(rows.size, -1) @ (k * guq).ravel()
            Nc = N[cols]
            T = Wt @ (c * Ndot[cols] + (dc * udq) * Nc).T
            T += WG.reshape(rows.size, -1) @ (k * G[cols]).reshape(cols.size, -1).T
            T += (WG * (dk * guq)).sum(axis=1) @ Nc.T
            R[fr] += r
            codes = (fr[:, None] * nf + fc[None, :]).ravel()
            pos = np.searchsorted(self._pair_codes, codes)
            data[pos] += T.ravel()
        T_csr = sp.csr_matrix((data, self._csr_indices, self._csr_indptr),
                              shape=(nf, nf))
        return R, T_csr

    def dump_matrix(self, path, u_full: np.ndarray, material: Material):
        """Matrix-market text dump of the tangent for external debugging."""
        import scipy.io
        _, T = self.assemble(u_full, material)
        scipy.io.mmwrite(str(path), T)


def project_plane(dofmap: DofMap, axis: int, base_coord: int, side: int, g,
                  n_extra: int = 1):
    """L2 projection of ``g`` onto the trace space of a base-aligned plane.

    The plane sits at base-grid coordinate ``base_coord`` along ``axis``;
    ``side`` selects the leaves used for the face integrals (+1 means leaves
    whose lower face lies on the plane).  On mesh-boundary planes the trace
    space is spanned exactly by the functions whose component lies in the
    plane, so a consistent mass solve reproduces any function of the trace
    space, constants included.

    ``g`` receives full space-time coordinates (N, dim).  Returns the plane
    functions' global indices and their projected coefficients.
    """
    mesh = dofmap.mesh
    dim = mesh.grid.dim
    plane_gidx = dofmap.plane_function_indices(axis, base_coord)
    m = plane_gidx.size
    if m == 0:
        return plane_gidx, np.zeros(0)
    rows, cols, vals = [], [], []
    b = np.zeros(m)
    # Ghost leaves are included: a spatial plane runs through the whole slab
    # time range, and its ghost-supported functions would otherwise get
    # empty mass rows.  Their fixed values never reach the solved region.
    for leaf in mesh.leaves:
        plane_idx = base_coord << leaf.level
        if side > 0:
            if leaf.ipos[axis] != plane_idx:
                continue
        elif leaf.ipos[axis] + 1 != plane_idx:
            continue
        ps, pt = dofmap.leaf_max_degrees(leaf)
        nodes = []
        w = np.asarray([1.0])
        jac = 1.0
        size = leaf.hi - leaf.lo
        for k in range(dim):
            if k == axis:
                nodes.append(np.asarray([-1.0 if side > 0 else 1.0]))
                continue
            p_k = pt if k == dim - 1 else ps
            x, wk = _gauss(p_k + 1 + n_extra)
            nodes.append(x)
            w = np.multiply.outer(w, wk).ravel()
            jac *= size[k] / 2.0
        w = w * jac
        gidx, _, N, _, _, _ = dofmap.evaluate_grid(leaf, nodes)
        pos = np.searchsorted(plane_gidx, gidx)
        pos[pos == m] = 0
        hit = plane_gidx[pos] == gidx
        li = pos[hit]
        Np = N[hit]
        axes = [leaf.lo[k] + 0.5 * (nodes[k] + 1.0) * size[k] for k in range(dim)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([q.ravel() for q in grids], axis=1)
        gq = np.asarray(g(pts), dtype=float)
        Me = (Np * w) @ Np.T
        rows.append(np.repeat(li, li.size))
        cols.append(np.tile(li, li.size))
        vals.append(Me.ravel())
        np.add.at(b, li, Np @ (w * gq))
    M = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(m, m))
    coeffs = spla.spsolve(M.tocsc(), b)
    return plane_gidx, coeffs
