"""Newton solution of one slab and the slab-marching driver.

Phase change makes the apparent heat capacity sharply peaked, so plain
Newton from a cold start tends to bounce off the transition.  Two guards
keep it on track: a continuation warm-up (first ignore latent heat, then
solve a strongly smoothed transition, then the target material) and a
bisection line search that damps any step which would increase the
residual norm.

The march builds every slab mesh together with a ghost region covering the
following slab, forces the next mesh's incoming time plane to carry exactly
the entities active on the current outgoing plane, and copies coefficients
across.  No interface projection is involved, which is what makes marching
equal to a monolithic space-time solve for linear problems.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import SlabSystem, project_plane
from .grid import BaseGrid, build_slab_mesh
from .hpbasis import build_basis
from .physics import Material

__all__ = [
    "NewtonSettings",
    "SlabState",
    "SingularSystemError",
    "NewtonError",
    "linear_solve",
    "continuation_stages",
    "newton_solve",
    "MarchProblem",
    "march",
    "save_state",
    "load_state",
]

log = logging.getLogger(__name__)


class SingularSystemError(RuntimeError):
    """The slab tangent could not be factorized or solved accurately."""


class NewtonError(RuntimeError):
    """Newton failed to reach the residual tolerance."""


@dataclass(frozen=True)
class NewtonSettings:
    rtol: float = 1e-4
    abs_floor: float = 1e-14
    max_iterations: int = 25
    max_bisections: int = 20
    continuation: bool = True

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("rtol must be positive")


@dataclass
class SlabState:
    """Solution of one slab plus what the next slab needs to start."""

    slab_index: int
    coefficients: np.ndarray
    #: (level, spatial codes, interior indices) -> coefficient on the
    #: outgoing time plane; keys are mesh-independent.
    interface_values: dict
    n_unknowns: int = 0
    newton_iterations: int = 0
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0


def linear_solve(T, rhs: np.ndarray) -> np.ndarray:
    """Sparse direct solve with a residual check and one refinement pass."""
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    try:
        lu = spla.splu(T.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite values")
    res = np.linalg.norm(T @ x - rhs)
    if res > 1e-10 * rhs_norm:
        x = x + lu.solve(rhs - T @ x)
        res = np.linalg.norm(T @ x - rhs)
        if res > 1e-10 * rhs_norm:
            raise SingularSystemError(
                f"linear solve residual {res / rhs_norm:.2e} above 1e-10")
    return x


def continuation_stages(material: Material) -> list[Material]:
    """Warm-up materials ending with the target one, duplicates removed."""
    stages = [material.without_latent_heat(),
              material.with_mushy_scale(10.0),
              material]
    out: list[Material] = []
    for m in stages:
        if not any(m == seen for seen in out):
            out.append(m)
    return out


def newton_solve(system: SlabSystem, u0: np.ndarray, material: Material,
                 settings: NewtonSettings = NewtonSettings()):
    """Solve one slab; returns the coefficient vector and residual history.

    The convergence scale is the initial residual of the target material;
    warm-up stages run a single damped iteration each.
    """
    u = np.asarray(u0, dtype=float).copy()
    free = system.free_indices
    stages = continuation_stages(material) if settings.continuation else [material]
    r0 = np.linalg.norm(system.residual(u, material))
    tol = max(settings.rtol * r0, settings.abs_floor)
    history = [r0]
    iterations = 0

    def step(stage, r_now):
        nonlocal u, iterations
        R, T = system.assemble(u, stage)
        du = linear_solve(T, R)
        beta = 1.0
        best = None
        for _ in range(settings.max_bisections):
            trial = u.copy()
            trial[free] -= beta * du
            r_trial = np.linalg.norm(system.residual(trial, stage))
            if r_trial < r_now:
                best = (beta, trial, r_trial)
                break
            beta *= 0.5
        if best is None:
            # a vanishing increment means the residual sits at the assembly
            # rounding floor; that is convergence, not failure
            if np.linalg.norm(du) <= 1e-12 * (1.0 + np.linalg.norm(u[free])):
                return r_now, True
            raise NewtonError(
                f"line search failed to reduce the residual ({r_now:.3e})")
        if best[0] < 1.0:
            wider = min(1.0, 1.5 * best[0])
            trial = u.copy()
            trial[free] -= wider * du
            r_trial = np.linalg.norm(system.residual(trial, stage))
            if r_trial < best[2]:
                best = (wider, trial, r_trial)
        u = best[1]
        iterations += 1
        return best[2], False

    for stage in stages[:-1]:
        if iterations >= settings.max_iterations:
            break
        r_stage = np.linalg.norm(system.residual(u, stage))
        # warm up only while genuinely unconverged; at the final tolerance a
        # stage step could not reduce a machine-floor residual and would
        # trip the line search
        if r_stage > tol:
            step(stage, r_stage)

    r = np.linalg.norm(system.residual(u, material))
    history.append(r)
    while r > tol:
        if iterations >= settings.max_iterations:
            raise NewtonError(
                f"no convergence in {settings.max_iterations} iterations; "
                f"residual ratio {r / max(r0, 1e-300):.3e}")
        r, at_floor = step(material, r)
        history.append(r)
        if at_floor:
            break
    return u, history, iterations


@dataclass
class MarchProblem:
    """Everything the slab march needs, independent of file formats."""

    grid: BaseGrid
    degrees: list
    material: Material
    trunk: bool = True
    source: object = None            # callable (x, t) -> W/m^3, or None
    target: object = None            # refinement target, or None (no refinement)
    initial_temperature: object = 25.0   # scalar or callable of space-time points
    dirichlet: object = None         # callable of space-time points, or None
    quadrature: str = "over"
    modify_tests: bool = True
    samples_per_axis: int = 5
    settings: NewtonSettings = NewtonSettings()


def _initial_value_fn(spec):
    if callable(spec):
        return spec
    value = float(spec)
    return lambda pts: np.full(len(pts), value)


def march(problem: MarchProblem, start_slab: int = 0, trace: dict | None = None,
          interface_entities: set | None = None):
    """Generator of ``(dofmap, SlabState)`` over the slabs of a run.

    ``trace`` and ``interface_entities`` restart the march from a recorded
    slab boundary; by default slab 0 starts from the initial temperature.
    """
    grid = problem.grid
    dim = grid.dim
    max_level = len(problem.degrees) - 1
    for k in range(start_slab, grid.slab_count):
        tic = time.perf_counter()
        mesh = build_slab_mesh(grid, k, problem.target,
                               samples_per_axis=problem.samples_per_axis,
                               max_level=max_level)
        dofmap = build_basis(mesh, problem.degrees, problem.trunk,
                             initial_plane_keys=interface_entities)
        u = np.zeros(dofmap.n_dofs)

        if trace is None:
            g0 = _initial_value_fn(problem.initial_temperature)
            gidx0, vals0 = project_plane(dofmap, dim - 1, mesh.time_root_range[0],
                                         +1, g0)
            by_gidx = dict(zip(gidx0.tolist(), vals0))
            trace = {key: by_gidx[g] for key, g in dofmap.initial_plane_keys().items()}
            fixed_values = dict(zip(gidx0.tolist(), vals0))
        else:
            fixed_values = {}
            for key, g in dofmap.initial_plane_keys().items():
                if key not in trace:
                    raise RuntimeError(
                        "incoming interface entity missing from the previous "
                        "slab's trace; slab meshes are inconsistent")
                fixed_values[g] = trace[key]

        # Initial guess: transport the incoming trace constantly in time by
        # copying each plane coefficient to the matching spatial component on
        # every later time plane.  Temporal bubble modes start at zero.
        for (level, codes), (start, interiors) in dofmap.entity_table.items():
            if codes[-1] & 1:
                continue
            reduced = codes[:-1]
            for j, inter in enumerate(interiors):
                v = trace.get((level, reduced, inter))
                if v is not None:
                    u[start + j] = v

        if problem.dirichlet is not None:
            for axis in range(grid.d):
                for coord, side in ((0, +1), (grid.spatial_counts[axis], -1)):
                    gD, vD = project_plane(dofmap, axis, coord, side,
                                           problem.dirichlet)
                    fixed_values.update(zip(gD.tolist(), vD))

        fixed = np.fromiter(fixed_values.keys(), dtype=np.int64,
                            count=len(fixed_values))
        u[fixed] = np.fromiter(fixed_values.values(), dtype=float,
                               count=len(fixed_values))
        system = SlabSystem(dofmap, source=problem.source,
                            quadrature=problem.quadrature,
                            modify_tests=problem.modify_tests, fixed=fixed)
        u, history, iters = newton_solve(system, u, problem.material,
                                         problem.settings)
        trace = {key: u[g] for key, g in dofmap.final_plane_keys().items()}
        interface_entities = dofmap.final_plane_entities()
        state = SlabState(
            slab_index=k,
            coefficients=u,
            interface_values=trace,
            n_unknowns=system.n_free,
            newton_iterations=iters,
            residual_history=history,
            wall_time=time.perf_counter() - tic,
        )
        log.info("slab %d: %d unknowns, %d Newton iterations, %.2f s",
                 k, state.n_unknowns, iters, state.wall_time)
        yield dofmap, state


def save_state(path, slab_index: int, interface_values: dict,
               interface_entities: set) -> None:
    """Write a restart checkpoint: the trace leaving slab ``slab_index``.

    Keys are mesh-independent (level, spatial codes, interior indices), so
    the checkpoint can seed ``march(..., start_slab=slab_index + 1)`` without
    any reference to the mesh that produced it.
    """
    keys = sorted(interface_values)
    d = len(keys[0][1]) if keys else 0
    levels = np.asarray([k[0] for k in keys], dtype=np.int64)
    codes = np.asarray([k[1] for k in keys], dtype=np.int64).reshape(len(keys), d)
    nint = np.asarray([len(k[2]) for k in keys], dtype=np.int64)
    inter = np.zeros((len(keys), d), dtype=np.int64)
    for i, k in enumerate(keys):
        inter[i, :len(k[2])] = k[2]
    values = np.asarray([interface_values[k] for k in keys], dtype=np.float64)
    ents = sorted(interface_entities)
    e_levels = np.asarray([e[0] for e in ents], dtype=np.int64)
    e_codes = np.asarray([e[1] for e in ents], dtype=np.int64).reshape(len(ents), d)
    np.savez(path, slab_index=np.int64(slab_index), levels=levels, codes=codes,
             n_interior=nint, interior=inter, values=values,
             entity_levels=e_levels, entity_codes=e_codes)


def load_state(path):
    """Read a checkpoint back: (slab_index, trace dict, entity set)."""
    with np.load(path) as data:
        slab_index = int(data["slab_index"])
        trace = {}
        for lv, cd, n, it, val in zip(data["levels"], data["codes"],
                                      data["n_interior"], data["interior"],
                                      data["values"]):
            key = (int(lv), tuple(int(c) for c in cd),
                   tuple(int(a) for a in it[:n]))
            trace[key] = float(val)
        entities = {(int(lv), tuple(int(c) for c in cd))
                    for lv, cd in zip(data["entity_levels"],
                                      data["entity_codes"])}
    return slab_index, trace, entities
