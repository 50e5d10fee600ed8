"""Verification tools: manufactured solutions and a time-stepping baseline.

Manufactured problems choose a closed-form temperature field, derive the
matching volumetric source through the strong form

    f = c(u) du/dt - k'(u) |grad u|^2 - k(u) lap u,

and impose the field itself as initial and Dirichlet data.  Convergence of
the space-time solver against such fields checks every term of the weak
form at once.

The baseline is a theta-scheme (backward Euler, Crank-Nicolson) acting on
the spatial trace of the same discretization, so the only difference from
the space-time solver is the treatment of time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import _gauss
from .grid import BaseGrid
from .hpbasis import DofMap
from .physics import Material, conductivity, heat_capacity
from .solver import MarchProblem, NewtonSettings, march

__all__ = [
    "ManufacturedSolution",
    "manufactured_source",
    "polynomial_solution",
    "smooth_solution",
    "spacetime_l2_error",
    "convergence_study",
    "spatial_operators",
    "theta_march",
    "crank_nicolson_gap",
    "UNIT_MATERIAL",
]

#: Constant-property material with c = k = 1, convenient for linear tests.
UNIT_MATERIAL = Material(density=1.0, latent_heat=0.0, specific_heat_ref=1.0,
                         specific_heat_slope=0.0, conductivity_ref=1.0,
                         conductivity_slope=0.0)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form field with the derivatives the strong form needs.

    All callables take ``(x, t)`` with ``x`` of shape (N, d) and return
    arrays of shape (N,) except ``grad`` which returns (N, d).
    """

    value: object
    dt: object
    grad: object
    laplacian: object


def manufactured_source(exact: ManufacturedSolution, material: Material):
    """Volumetric source that makes ``exact`` solve the heat equation."""
    def f(x, t):
        u = exact.value(x, t)
        c, _ = heat_capacity(material, u)
        k, dk = conductivity(material, u)
        g = exact.grad(x, t)
        return (c * exact.dt(x, t)
                - dk * np.sum(g * g, axis=1)
                - k * exact.laplacian(x, t))
    return f


def polynomial_solution(d: int, coeff: float = 1.0) -> ManufacturedSolution:
    """u = coeff * (sum_k x_k) * t: inside every p >= 1 discrete space."""
    return ManufacturedSolution(
        value=lambda x, t: coeff * x.sum(axis=1) * t,
        dt=lambda x, t: coeff * x.sum(axis=1),
        grad=lambda x, t: coeff * np.repeat(t[:, None], x.shape[1], axis=1),
        laplacian=lambda x, t: np.zeros(len(t)),
    )


def smooth_solution(d: int, scale: float = 30.0,
                    rate: float = 1.0) -> ManufacturedSolution:
    """Decaying product of cosines, infinitely smooth, O(scale) amplitude."""
    def value(x, t):
        return scale * np.exp(-rate * t) * np.prod(np.cos(np.pi * x), axis=1)

    def dt(x, t):
        return -rate * value(x, t)

    def grad(x, t):
        base = scale * np.exp(-rate * t)
        cells = np.cos(np.pi * x)
        out = np.empty_like(x)
        for k in range(x.shape[1]):
            cols = cells.copy()
            cols[:, k] = -np.pi * np.sin(np.pi * x[:, k])
            out[:, k] = base * np.prod(cols, axis=1)
        return out

    def laplacian(x, t):
        return -(np.pi ** 2) * x.shape[1] * value(x, t)

    return ManufacturedSolution(value, dt, grad, laplacian)


def spacetime_l2_error(dofmap: DofMap, u: np.ndarray, exact_value,
                       n_extra: int = 2) -> float:
    """Squared L2 error over the slab's solved region (sum across slabs)."""
    total = 0.0
    for leaf in dofmap.mesh.slab_leaves():
        ps, pt = dofmap.leaf_max_degrees(leaf)
        counts = (ps + 1 + n_extra,) * dofmap.mesh.grid.d + (pt + 1 + n_extra,)
        nodes = [_gauss(c)[0] for c in counts]
        size = leaf.hi - leaf.lo
        w = np.asarray([1.0])
        for c in counts:
            w = np.multiply.outer(w, _gauss(c)[1]).ravel()
        w = w * np.prod(size / 2.0)
        axes = [leaf.lo[k] + 0.5 * (nodes[k] + 1.0) * size[k]
                for k in range(len(counts))]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        gidx, _, N, _, _, _ = dofmap.evaluate_grid(leaf, nodes)
        err = u[gidx] @ N - exact_value(pts[:, :-1], pts[:, -1])
        total += float((err * err) @ w)
    return total


def run_manufactured(grid: BaseGrid, degrees, exact: ManufacturedSolution,
                     material: Material = UNIT_MATERIAL, trunk: bool = False,
                     settings: NewtonSettings = NewtonSettings(),
                     target=None, quadrature: str = "over"):
    """March a manufactured problem; returns (error, unknowns, states)."""
    problem = MarchProblem(
        grid=grid, degrees=degrees, material=material, trunk=trunk,
        source=manufactured_source(exact, material),
        target=target,
        initial_temperature=lambda pts: exact.value(pts[:, :-1], pts[:, -1]),
        dirichlet=lambda pts: exact.value(pts[:, :-1], pts[:, -1]),
        quadrature=quadrature, settings=settings)
    err2 = 0.0
    unknowns = 0
    states = []
    for dofmap, state in march(problem):
        err2 += spacetime_l2_error(dofmap, state.coefficients, exact.value)
        unknowns += state.n_unknowns
        states.append((dofmap, state))
    return np.sqrt(err2), unknowns, states


def convergence_study(d: int, degree: int, levels: int,
                      exact: ManufacturedSolution | None = None,
                      base_cells: int = 2, slab_count: int = 1,
                      material: Material = UNIT_MATERIAL,
                      duration: float = 0.25):
    """Uniform-refinement error table; rate = log2(e_h / e_{h/2}).

    Each refinement level doubles the cell count along every axis, space
    and time together, so the observed rate is the space-time L2 order.
    """
    if exact is None:
        exact = smooth_solution(d)
    rows = []
    for lvl in range(levels):
        cells = base_cells * 2 ** lvl
        grid = BaseGrid(
            spatial_origin=(0.0,) * d, spatial_extent=(1.0,) * d,
            spatial_counts=(cells,) * d,
            slab_duration=duration / slab_count, slab_count=slab_count,
            elements_per_slab=max(1, cells // slab_count))
        err, unknowns, _ = run_manufactured(grid, [(degree, degree)], exact,
                                            material)
        rate = np.nan if not rows else np.log2(rows[-1]["error"] / err)
        rows.append({"level": lvl, "cells": cells, "unknowns": unknowns,
                     "error": err, "rate": rate})
    return rows


def spatial_operators(dofmap: DofMap, material: Material = UNIT_MATERIAL,
                      source=None, n_extra: int = 1):
    """Mass and stiffness of the spatial trace at the slab's first plane.

    Only valid on unrefined tensor-product meshes, where the trace space at
    every base time plane is the same.  Returns the plane function indices
    (defining the state ordering), M, K (CSR, constant material assumed)
    and a load closure ``F(t)``.
    """
    mesh = dofmap.mesh
    if any(leaf.level != 0 for leaf in mesh.leaves):
        raise ValueError("baseline operators need an unrefined mesh")
    d = mesh.grid.d
    t0 = mesh.time_root_range[0]
    plane = dofmap.plane_function_indices(d, t0)
    m = plane.size
    c_val, _ = heat_capacity(material, np.asarray([0.0]))
    k_val, _ = conductivity(material, np.asarray([0.0]))
    rows, cols, mv, kv = [], [], [], []
    face_data = []
    for leaf in mesh.slab_leaves():
        if leaf.ipos[-1] != t0:
            continue
        ps, _ = dofmap.leaf_max_degrees(leaf)
        x, wk = _gauss(ps + 1 + n_extra)
        nodes = [x] * d + [np.asarray([-1.0])]
        size = leaf.hi - leaf.lo
        w = np.asarray([1.0])
        for _ in range(d):
            w = np.multiply.outer(w, wk).ravel()
        w = w * np.prod(size[:-1] / 2.0)
        gidx, _, N, _, G, _ = dofmap.evaluate_grid(leaf, nodes)
        pos = np.searchsorted(plane, gidx)
        pos[pos == m] = 0
        hit = plane[pos] == gidx
        li = pos[hit]
        Np = N[hit]
        Gp = G[hit]
        Me = (Np * (w * c_val)) @ Np.T
        Ke = sum((Gp[:, s, :] * (w * k_val)) @ Gp[:, s, :].T for s in range(d))
        rows.append(np.repeat(li, li.size))
        cols.append(np.tile(li, li.size))
        mv.append(Me.ravel())
        kv.append(Ke.ravel())
        axes = [leaf.lo[k] + 0.5 * (x + 1.0) * size[k] for k in range(d)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        face_data.append((li, Np, w, pts))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    M = sp.csr_matrix((np.concatenate(mv), (rows, cols)), shape=(m, m))
    K = sp.csr_matrix((np.concatenate(kv), (rows, cols)), shape=(m, m))

    def load(t: float) -> np.ndarray:
        b = np.zeros(m)
        if source is not None:
            for li, Np, w, pts in face_data:
                fq = source(pts, np.full(len(pts), t))
                np.add.at(b, li, Np @ (w * fq))
        return b

    return plane, M, K, load


def theta_march(M, K, load, u0: np.ndarray, dt: float, n_steps: int,
                theta: float = 0.5, t_start: float = 0.0):
    """Linear theta-scheme history [u0, u1, ...] with constant operators."""
    A = (M / dt + theta * K).tocsc()
    B = (M / dt - (1.0 - theta) * K).tocsr()
    lu = spla.splu(A)
    history = [np.asarray(u0, dtype=float)]
    t = float(t_start)
    for _ in range(n_steps):
        rhs = B @ history[-1] + (1 - theta) * load(t) + theta * load(t + dt)
        history.append(lu.solve(rhs))
        t += dt
    return history


def crank_nicolson_gap(d: int = 1, cells: int = 8, n_steps: int = 4,
                       duration: float = 0.2) -> float:
    """Largest coefficient gap between the lowest-order space-time solution
    and Crank-Nicolson on the matching spatial operators.

    With constant material properties, pure Neumann boundaries and a source
    affine in time, the two time discretizations produce identical nodal
    planes, so the gap is an end-to-end consistency check of assembly,
    elimination and solve.  Coefficients are matched across time planes via
    their mesh-independent spatial keys.
    """
    grid = BaseGrid(spatial_origin=(0.0,) * d, spatial_extent=(1.0,) * d,
                    spatial_counts=(cells,) * d, slab_duration=duration,
                    slab_count=1, elements_per_slab=n_steps)

    def source(x, t):
        return np.cos(np.pi * x[:, 0]) * (1.0 + 3.0 * t) + 0.5 * t

    problem = MarchProblem(grid=grid, degrees=[(1, 1)],
                           material=UNIT_MATERIAL, source=source,
                           initial_temperature=0.0)
    (dofmap, state), = list(march(problem))
    u = state.coefficients
    plane0, M, K, load = spatial_operators(dofmap, UNIT_MATERIAL, source)
    by_gidx = {g: key for key, g in dofmap.plane_function_keys(d, 0).items()}
    order = [by_gidx[g] for g in plane0]
    history = theta_march(M, K, load, u[plane0], grid.time_element_duration,
                          n_steps, theta=0.5, t_start=grid.start_time)
    worst = 0.0
    for step in range(1, n_steps + 1):
        keys = dofmap.plane_function_keys(d, step)
        ref = np.asarray([u[keys[key]] for key in order])
        worst = max(worst, float(np.max(np.abs(ref - history[step]))))
    return worst
