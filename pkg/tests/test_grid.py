"""Slab meshes: tree refinement, neighbors and the ghost-region contract."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slabheat.grid import (BOUNDARY, BaseGrid, SlabMesh, build_slab_mesh,
                           round_half_up)


def small_grid(d=2, counts=None, slabs=3, m=2):
    counts = counts or (3, 2)[:d] if d <= 2 else (3, 2, 2)
    return BaseGrid(
        spatial_origin=(0.0,) * d,
        spatial_extent=tuple(float(c) for c in counts),
        spatial_counts=counts,
        slab_duration=1.0 * m,
        slab_count=slabs,
        elements_per_slab=m,
    )


def ball_target(center, radius, depth):
    """Constant refinement depth inside a space-time ball, 0 outside."""
    c = np.asarray(center, dtype=float)

    def target(pts):
        r = np.linalg.norm(pts - c, axis=1)
        return np.where(r <= radius, float(depth), 0.0)

    return target


def test_round_half_up_breaks_ties_upward():
    assert [round_half_up(v) for v in (0.4, 0.5, 1.5, 2.5, -0.4, -0.5, 3.49)] \
        == [0, 1, 2, 3, 0, 0, 3]


def test_grid_geometry_properties():
    g = small_grid(d=2)
    assert g.d == 2 and g.dim == 3
    assert np.allclose(g.spacing, [1.0, 1.0, 1.0])
    assert g.time_element_duration == 1.0
    assert g.slab_start(0) == 0.0 and g.slab_start(2) == 4.0
    assert g.end_time == 6.0
    assert g.slab_time_root_range(1) == (2, 4)


def test_grid_rejects_inconsistent_shapes():
    with pytest.raises(ValueError):
        BaseGrid(spatial_origin=(0.0,), spatial_extent=(1.0, 1.0),
                 spatial_counts=(2,), slab_duration=1.0, slab_count=1)
    with pytest.raises(ValueError):
        BaseGrid(spatial_origin=(0.0,), spatial_extent=(1.0,),
                 spatial_counts=(0,), slab_duration=1.0, slab_count=1)
    with pytest.raises(ValueError):
        BaseGrid(spatial_origin=(0.0,), spatial_extent=(1.0,),
                 spatial_counts=(2,), slab_duration=-1.0, slab_count=1)


def test_unrefined_slab_has_region_and_ghost_roots():
    g = small_grid(d=2, slabs=3, m=2)
    mesh = build_slab_mesh(g, 0)
    # 3*2 spatial roots times (2 region + 2 ghost) time elements
    assert len(mesh.leaves) == 6 * 4
    assert len(mesh.slab_leaves()) == 6 * 2
    assert len(mesh.ghost_leaves()) == 6 * 2
    assert mesh.has_ghost

    last = build_slab_mesh(g, 2)
    assert not last.has_ghost
    assert len(last.leaves) == 6 * 2
    assert last.time_root_range == (4, 6)


def test_split_partitions_parent_exactly():
    g = small_grid(d=2)
    mesh = build_slab_mesh(g, 0)
    cell = mesh.leaves[0]
    children = mesh.split(cell)
    assert len(children) == 2 ** g.dim
    vol = sum(np.prod(ch.hi - ch.lo) for ch in children)
    assert np.isclose(vol, np.prod(cell.hi - cell.lo))
    lo = np.min([ch.lo for ch in children], axis=0)
    hi = np.max([ch.hi for ch in children], axis=0)
    assert np.allclose(lo, cell.lo) and np.allclose(hi, cell.hi)
    for ch in children:
        assert ch.level == cell.level + 1
        assert ch.parent is cell


def test_neighbor_same_level_and_boundary():
    g = small_grid(d=1, counts=(3,), slabs=1, m=2)
    mesh = build_slab_mesh(g, 0)
    by_pos = {leaf.ipos: leaf for leaf in mesh.leaves}
    mid = by_pos[(1, 0)]
    assert mesh.neighbor(mid, 0, +1) is by_pos[(2, 0)]
    assert mesh.neighbor(mid, 0, -1) is by_pos[(0, 0)]
    assert mesh.neighbor(by_pos[(0, 0)], 0, -1) is BOUNDARY
    assert mesh.neighbor(by_pos[(2, 0)], 0, +1) is BOUNDARY
    assert mesh.neighbor(by_pos[(1, 1)], 1, +1) is BOUNDARY
    assert mesh.neighbor(by_pos[(1, 0)], 1, -1) is BOUNDARY


def test_neighbor_across_levels_returns_coarser_cell():
    g = small_grid(d=1, counts=(2,), slabs=1, m=1)
    mesh = build_slab_mesh(g, 0)
    left = next(l for l in mesh.leaves if l.ipos == (0, 0))
    children = mesh.split(left)
    fine_right = next(c for c in children if c.ipos == (1, 1))
    coarse = mesh.neighbor(fine_right, 0, +1)
    assert coarse.level == 0 and coarse.ipos == (1, 0)


def test_locate_returns_containing_leaf(rng):
    g = small_grid(d=2, slabs=2, m=2)
    target = ball_target((1.0, 1.0, 1.0), 1.2, 2)
    mesh = build_slab_mesh(g, 0, target)
    for _ in range(50):
        x = rng.uniform([0, 0], [3.0, 2.0])
        t = rng.uniform(0.0, mesh.slab_end_time)
        leaf = mesh.locate(x, t)
        assert leaf.is_leaf
        p = np.append(x, t)
        assert np.all(p >= leaf.lo - 1e-12) and np.all(p <= leaf.hi + 1e-12)


def test_leaves_partition_the_slab_box():
    g = small_grid(d=2, slabs=2, m=2)
    target = ball_target((0.5, 0.5, 0.5), 1.0, 3)
    mesh = build_slab_mesh(g, 0, target)
    vol = sum(np.prod(leaf.hi - leaf.lo) for leaf in mesh.leaves)
    r0, r1 = mesh.time_root_range
    box = np.prod(g.spatial_extent) * (r1 - r0) * g.time_element_duration
    assert np.isclose(vol, box)
    assert any(leaf.level == 3 for leaf in mesh.leaves)


def test_refinement_decision_matches_sampled_target():
    """A leaf stays a leaf iff no sample of the target exceeds its level."""
    g = small_grid(d=2, slabs=1, m=1)
    target = ball_target((1.5, 1.0, 0.5), 0.9, 2)
    mesh = build_slab_mesh(g, 0, target, samples_per_axis=5)
    for leaf in mesh.leaves:
        axes = [np.linspace(leaf.lo[k], leaf.hi[k], 5) for k in range(3)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([q.ravel() for q in grids], axis=1)
        worst = max(round_half_up(v) for v in target(pts))
        assert worst <= leaf.level


def test_max_level_caps_refinement():
    g = small_grid(d=1, counts=(2,), slabs=1, m=1)
    target = ball_target((1.0, 0.5), 5.0, 9)
    mesh = build_slab_mesh(g, 0, target, max_level=2)
    assert max(leaf.level for leaf in mesh.leaves) == 2


def test_ghost_refinement_matches_next_slab_region():
    """The ghost half of slab k carries the refinement slab k+1 will own."""
    g = small_grid(d=2, slabs=3, m=2)
    target = ball_target((1.0, 1.0, 2.5), 1.0, 2)
    mesh_k = build_slab_mesh(g, 0, target)
    mesh_next = build_slab_mesh(g, 1, target)
    ghost = {(l.level, l.ipos) for l in mesh_k.ghost_leaves()}
    region = {(l.level, l.ipos) for l in mesh_next.slab_leaves()}
    assert ghost == region


@settings(max_examples=15)
@given(cx=st.floats(0.0, 3.0), cy=st.floats(0.0, 2.0),
       ct=st.floats(0.0, 4.0), radius=st.floats(0.1, 1.5),
       depth=st.integers(0, 3))
def test_partition_invariant_random_targets(cx, cy, ct, radius, depth):
    g = small_grid(d=2, slabs=2, m=2)
    mesh = build_slab_mesh(g, 0, ball_target((cx, cy, ct), radius, depth))
    vol = sum(np.prod(leaf.hi - leaf.lo) for leaf in mesh.leaves)
    r0, r1 = mesh.time_root_range
    assert np.isclose(vol, 3.0 * 2.0 * (r1 - r0) * g.time_element_duration)
    for leaf in mesh.leaves:
        assert leaf.level <= depth
