"""hp basis: shape functions, activation, continuity, trunk spaces.

The 1D shape function oracle is numpy's own Legendre module, an
independent implementation of the same polynomials; a few values are
additionally frozen as exact literals from a hand derivation.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre

from slabheat.grid import BaseGrid, build_slab_mesh
from slabheat.hpbasis import (DofMap, build_basis, eval_integrated_legendre,
                              evaluate_basis, trunk_mask)

from test_grid import ball_target


def legendre_value(j, x):
    c = np.zeros(j + 1)
    c[j] = 1.0
    return legendre.legval(x, c)


def test_linear_modes_are_the_endpoint_hats():
    vals, ders = eval_integrated_legendre(3, np.asarray([-1.0, 0.0, 1.0]))
    assert np.allclose(vals[0], [1.0, 0.5, 0.0])
    assert np.allclose(vals[1], [0.0, 0.5, 1.0])
    assert np.allclose(ders[0], -0.5)
    assert np.allclose(ders[1], 0.5)


def test_high_modes_vanish_at_endpoints():
    vals, _ = eval_integrated_legendre(6, np.asarray([-1.0, 1.0]))
    assert np.allclose(vals[2:], 0.0, atol=1e-14)


def test_frozen_hand_values():
    # N_2(0) = (P_2(0) - P_0(0)) / sqrt(6) = (-1/2 - 1)/sqrt(6) = -1.5/sqrt(6)
    vals, ders = eval_integrated_legendre(2, 0.0)
    assert vals[2] == pytest.approx(-1.5 / np.sqrt(6.0), abs=1e-15)
    # N_2'(x) = sqrt(3/2) P_1(x) = sqrt(3/2) x
    assert ders[2] == pytest.approx(0.0, abs=1e-15)
    vals5, ders5 = eval_integrated_legendre(2, 0.5)
    assert ders5[2] == pytest.approx(np.sqrt(1.5) * 0.5, abs=1e-15)


@given(st.integers(2, 9), st.floats(-1.0, 1.0))
def test_matches_numpy_legendre(p, x):
    vals, ders = eval_integrated_legendre(p, x)
    for j in range(2, p + 1):
        ref = (legendre_value(j, x) - legendre_value(j - 2, x)) \
            / np.sqrt(2.0 * (2 * j - 1))
        assert vals[j] == pytest.approx(ref, abs=1e-13)
        dref = np.sqrt((2 * j - 1) / 2.0) * legendre_value(j - 1, x)
        assert ders[j] == pytest.approx(dref, abs=1e-13)


def test_derivatives_match_finite_differences():
    x = np.linspace(-0.95, 0.95, 11)
    h = 1e-6
    vp, _ = eval_integrated_legendre(5, x + h)
    vm, _ = eval_integrated_legendre(5, x - h)
    _, ders = eval_integrated_legendre(5, x)
    assert np.allclose((vp - vm) / (2 * h), ders, atol=1e-8)


def test_trunk_mask_p2_removes_exactly_the_multi_quadratic_modes():
    # Budget max(2,2)-1 = 1: an index survives unless two or more axes carry
    # a quadratic factor.
    mask = trunk_mask(2, 2, 2)
    removed = {alpha for alpha in np.ndindex(mask.shape) if not mask[alpha]}
    expected = {alpha for alpha in np.ndindex(3, 3, 3)
                if sum(1 for a in alpha if a == 2) >= 2}
    assert removed == expected
    assert len(removed) == 7


def test_trunk_mask_count_deep_benchmark_cell():
    # ps=3, pt=1, d=3: 38 spatial indices survive (8 vertex-type, 12 with one
    # quadratic, 12 with one cubic or two quadratics sharing the budget), and
    # both linear time indices pair with each: 76 total.  Hand-counted.
    mask = trunk_mask(3, 1, 3)
    assert int(mask.sum()) == 76


def test_trunk_mask_keeps_vertices_and_edges():
    mask = trunk_mask(4, 3, 2)
    assert mask[0, 0, 0] and mask[1, 1, 1]
    assert mask[4, 0, 0] and mask[0, 4, 1] and mask[1, 0, 3]


def space_time_grid(counts, slabs=1, m=1, duration=1.0):
    d = len(counts)
    return BaseGrid(spatial_origin=(0.0,) * d,
                    spatial_extent=tuple(float(c) for c in counts),
                    spatial_counts=tuple(counts),
                    slab_duration=duration * m, slab_count=slabs,
                    elements_per_slab=m)


def test_unrefined_linear_count_is_node_count():
    g = space_time_grid((4,), m=3)
    mesh = build_slab_mesh(g, 0)
    dm = build_basis(mesh, [(1, 1)])
    assert dm.n_dofs == 5 * 4

    g2 = space_time_grid((3, 2), m=2)
    dm2 = build_basis(build_slab_mesh(g2, 0), [(1, 1)])
    assert dm2.n_dofs == 4 * 3 * 3


def test_unrefined_p2_count_matches_tensor_dimension():
    # 1D, p=2 in space and time: per axis n+1 vertices and n interior modes.
    g = space_time_grid((3,), m=2)
    dm = build_basis(build_slab_mesh(g, 0), [(2, 2)])
    assert dm.n_dofs == (3 + 1 + 3) * (2 + 1 + 2)


def refined_dofmap(d=2, degrees=((2, 2), (2, 2)), depth=1, trunk=False):
    counts = (3, 2, 2)[:d]
    g = space_time_grid(counts, m=2)
    center = np.asarray(counts, dtype=float) / 2.0
    target = ball_target(tuple(center) + (0.8,), 0.9, depth)
    mesh = build_slab_mesh(g, 0, target, max_level=len(degrees) - 1)
    assert any(leaf.level > 0 for leaf in mesh.leaves)
    return build_basis(mesh, list(degrees), trunk=trunk)


def field_value(dofmap, u, leaf, x):
    xi = 2.0 * (np.asarray(x) - leaf.lo) / (leaf.hi - leaf.lo) - 1.0
    gidx, N, gradN, Ndot, gradNdot = evaluate_basis(dofmap, leaf, xi)
    return float(u[gidx] @ N)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_field_continuous_across_hanging_faces(d, rng):
    """Evaluate a random coefficient field from both sides of every face
    between leaves of different refinement levels; values must agree."""
    degrees = [(2, 2), (2, 2), (1, 1)]
    dm = refined_dofmap(d=d, degrees=degrees, depth=2)
    mesh = dm.mesh
    u = rng.standard_normal(dm.n_dofs)
    checked = 0
    for leaf in mesh.leaves:
        for axis in range(mesh.grid.dim):
            other = mesh.neighbor(leaf, axis, +1)
            if other in (None,) or not hasattr(other, "level"):
                continue
            if other.level == leaf.level:
                continue
            if not other.is_leaf:
                continue
            for _ in range(4):
                x = rng.uniform(leaf.lo, leaf.hi)
                x[axis] = leaf.hi[axis]
                if not np.all((x >= other.lo - 1e-12) & (x <= other.hi + 1e-12)):
                    continue
                a = field_value(dm, u, leaf, x)
                b = field_value(dm, u, other, x)
                assert a == pytest.approx(b, abs=1e-10)
                checked += 1
    assert checked > 0


def test_constant_and_linear_fields_lie_in_the_span(rng):
    """Project x -> a + b.x onto a refined basis; the residual at random
    points must vanish (hanging-node treatment preserves polynomials)."""
    from slabheat.assembly import project_plane

    dm = refined_dofmap(d=2, degrees=[(1, 1), (1, 1), (1, 1)], depth=2)
    mesh = dm.mesh
    t0 = mesh.time_root_range[0]

    def linear(pts):
        return 0.7 + 0.3 * pts[:, 0] - 0.5 * pts[:, 1]

    gidx, coeffs = project_plane(dm, mesh.grid.dim - 1, t0, +1, linear)
    u = np.zeros(dm.n_dofs)
    u[gidx] = coeffs
    for leaf in mesh.leaves:
        if leaf.ipos[-1] != 0:
            continue
        for _ in range(5):
            x = rng.uniform(leaf.lo, leaf.hi)
            x[-1] = leaf.lo[-1]
            val = field_value(dm, u, leaf, x)
            assert val == pytest.approx(0.7 + 0.3 * x[0] - 0.5 * x[1],
                                        abs=1e-10)


def test_plane_keys_are_mesh_independent(rng):
    """The same spatial entity gets the same key on both meshes sharing a
    time plane, which is what the slab handoff relies on."""
    g = space_time_grid((3, 2), slabs=2, m=1)
    target = ball_target((1.5, 1.0, 1.0), 0.7, 1)
    mesh0 = build_slab_mesh(g, 0, target)
    mesh1 = build_slab_mesh(g, 1, target)
    dm0 = build_basis(mesh0, [(2, 1), (2, 1)])
    final0 = dm0.final_plane_entities()
    dm1 = build_basis(mesh1, [(2, 1), (2, 1)], initial_plane_keys=final0)
    keys0 = set(dm0.final_plane_keys())
    keys1 = set(dm1.initial_plane_keys())
    assert keys0 == keys1


def test_forced_plane_without_support_raises():
    g = space_time_grid((2,), slabs=2, m=1)
    mesh1 = build_slab_mesh(g, 1)
    bogus = {(3, (5,))}
    with pytest.raises(RuntimeError):
        build_basis(mesh1, [(1, 1)] * 4, initial_plane_keys=bogus)


def test_trunk_reduces_count_but_keeps_continuity(rng):
    full = refined_dofmap(d=2, degrees=[(3, 2), (3, 2), (2, 1)], depth=2,
                          trunk=False)
    trunk = refined_dofmap(d=2, degrees=[(3, 2), (3, 2), (2, 1)], depth=2,
                           trunk=True)
    assert trunk.n_dofs < full.n_dofs
    u = rng.standard_normal(trunk.n_dofs)
    mesh = trunk.mesh
    for leaf in mesh.leaves[:10]:
        other = mesh.neighbor(leaf, 0, +1)
        if not hasattr(other, "level") or not other.is_leaf:
            continue
        x = rng.uniform(leaf.lo, leaf.hi)
        x[0] = leaf.hi[0]
        x = np.clip(x, other.lo, other.hi)
        assert field_value(trunk, u, leaf, x) == \
            pytest.approx(field_value(trunk, u, other, x), abs=1e-10)


def test_evaluate_basis_rejects_points_outside_reference_box():
    g = space_time_grid((2,), m=1)
    dm = build_basis(build_slab_mesh(g, 0), [(1, 1)])
    leaf = dm.mesh.leaves[0]
    with pytest.raises(ValueError):
        evaluate_basis(dm, leaf, np.asarray([1.5, 0.0]))


def test_evaluate_grid_derivative_scaling(rng):
    """Physical derivatives: compare against central differences of the
    field, including on leaves that inherit coarse functions."""
    dm = refined_dofmap(d=1, degrees=[(2, 2), (2, 2), (2, 2)], depth=2)
    u = rng.standard_normal(dm.n_dofs)
    mesh = dm.mesh
    leaf = max(mesh.leaves, key=lambda l: l.level)
    x = 0.5 * (leaf.lo + leaf.hi)
    h = 1e-6 * (leaf.hi - leaf.lo)

    xi = np.zeros(2)
    gidx, N, gradN, Ndot, gradNdot = evaluate_basis(dm, leaf, xi)
    grad_x = float(u[gidx] @ gradN[:, 0])
    dot_t = float(u[gidx] @ Ndot)

    fd_x = (field_value(dm, u, leaf, x + [h[0], 0]) -
            field_value(dm, u, leaf, x - [h[0], 0])) / (2 * h[0])
    fd_t = (field_value(dm, u, leaf, x + [0, h[1]]) -
            field_value(dm, u, leaf, x - [0, h[1]])) / (2 * h[1])
    assert grad_x == pytest.approx(fd_x, rel=1e-6, abs=1e-6)
    assert dot_t == pytest.approx(fd_t, rel=1e-6, abs=1e-6)
