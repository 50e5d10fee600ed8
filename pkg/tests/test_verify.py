"""Verification harness: manufactured solutions, rates, scheme equivalence."""

import numpy as np
import pytest
import scipy.sparse as sp

from slabheat.grid import BaseGrid, build_slab_mesh
from slabheat.hpbasis import build_basis
from slabheat.physics import Material, conductivity
from slabheat.verify import (UNIT_MATERIAL, convergence_study,
                             crank_nicolson_gap, manufactured_source,
                             polynomial_solution, run_manufactured,
                             smooth_solution, spatial_operators, theta_march)


def fd_checks(exact, d, rng, n=20, h=1e-6):
    x = rng.uniform(0.1, 0.9, size=(n, d))
    t = rng.uniform(0.1, 0.9, size=n)
    vt = (exact.value(x, t + h) - exact.value(x, t - h)) / (2 * h)
    assert np.allclose(exact.dt(x, t), vt, rtol=1e-6, atol=1e-8)
    lap = np.zeros(n)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        gk = (exact.value(x + e, t) - exact.value(x - e, t)) / (2 * h)
        assert np.allclose(exact.grad(x, t)[:, k], gk, rtol=1e-6,
                           atol=1e-6 * np.abs(gk).max())
        lap += (exact.grad(x + e, t)[:, k] - exact.grad(x - e, t)[:, k]) / (2 * h)
    assert np.allclose(exact.laplacian(x, t), lap, rtol=1e-6,
                       atol=1e-6 * np.abs(lap).max())


@pytest.mark.parametrize("d", [1, 2, 3])
def test_smooth_solution_derivatives_are_consistent(d, rng):
    fd_checks(smooth_solution(d, scale=17.0, rate=1.3), d, rng)


@pytest.mark.parametrize("d", [1, 2])
def test_polynomial_solution_derivatives_are_consistent(d, rng):
    fd_checks(polynomial_solution(d, coeff=2.5), d, rng)


def test_manufactured_source_closes_the_nonlinear_strong_form(rng):
    # check f = c u_t - div(k(u) grad u) by differencing the flux directly,
    # which exercises the chain-rule term through the mushy zone
    mat = Material()
    exact = smooth_solution(2, scale=1400.0, rate=0.4)
    f = manufactured_source(exact, mat)
    x = rng.uniform(0.2, 0.8, size=(40, 2))
    t = rng.uniform(0.1, 0.5, size=40)

    def flux(x, t, k_axis):
        u = exact.value(x, t)
        k, _ = conductivity(mat, u)
        return k * exact.grad(x, t)[:, k_axis]

    h = 1e-6
    div = np.zeros(40)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        div += (flux(x + e, t, k) - flux(x - e, t, k)) / (2 * h)
    u = exact.value(x, t)
    from slabheat.physics import heat_capacity
    c, _ = heat_capacity(mat, u)
    want = c * exact.dt(x, t) - div
    got = f(x, t)
    assert np.allclose(got, want, rtol=2e-5, atol=2e-5 * np.abs(want).max())


@pytest.mark.parametrize("d", [1, 2])
def test_multilinear_solution_is_captured_exactly(d):
    grid = BaseGrid(spatial_origin=(0.0,) * d, spatial_extent=(1.0,) * d,
                    spatial_counts=(3,) * d, slab_duration=0.2, slab_count=2,
                    elements_per_slab=1)
    exact = polynomial_solution(d, coeff=4.0)
    err, unknowns, _ = run_manufactured(grid, [(1, 1)], exact)
    assert unknowns > 0
    assert err < 1e-10


def test_first_order_elements_converge_at_second_order():
    rows = convergence_study(1, 1, 4)
    rates = [r["rate"] for r in rows[1:]]
    assert rates[-1] == pytest.approx(2.0, abs=0.25)
    errs = [r["error"] for r in rows]
    assert all(e1 > e2 for e1, e2 in zip(errs, errs[1:]))


def test_second_order_elements_converge_at_third_order():
    rows = convergence_study(1, 2, 4)
    assert rows[-1]["rate"] == pytest.approx(3.0, abs=0.25)


def test_rates_hold_in_two_dimensions():
    rows = convergence_study(2, 1, 3)
    assert rows[-1]["rate"] == pytest.approx(2.0, abs=0.25)


def test_refinement_preserves_manufactured_accuracy():
    d = 2
    grid = BaseGrid(spatial_origin=(0.0,) * d, spatial_extent=(1.0,) * d,
                    spatial_counts=(4,) * d, slab_duration=0.25, slab_count=1,
                    elements_per_slab=4)
    exact = smooth_solution(d)

    def target(pts):
        r = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5)
        return np.where(r < 0.3, 1.0, 0.0)

    err_flat, _, _ = run_manufactured(grid, [(1, 1)], exact)
    err_ref, n_ref, _ = run_manufactured(grid, [(1, 1), (1, 1)], exact,
                                         target=target)
    # the refined space contains the flat one; hanging constraints must not
    # wreck the approximation
    assert err_ref < 1.5 * err_flat
    assert n_ref > 0


def test_lowest_order_march_equals_crank_nicolson():
    assert crank_nicolson_gap() < 1e-12
    assert crank_nicolson_gap(d=2, cells=3, n_steps=3) < 1e-12


def test_spatial_operators_have_conservation_structure():
    d = 2
    grid = BaseGrid(spatial_origin=(0.0,) * d, spatial_extent=(1.0,) * d,
                    spatial_counts=(3,) * d, slab_duration=0.2, slab_count=1,
                    elements_per_slab=1)
    dm = build_basis(build_slab_mesh(grid, 0), [(1, 1)])
    plane, M, K, load = spatial_operators(dm, UNIT_MATERIAL,
                                          source=lambda x, t: np.ones(len(x)))
    # at first order the hats sum to one, so the flat vector is the constant
    ones = np.ones(plane.size)
    assert np.abs(K @ ones).max() < 1e-12
    assert ones @ (M @ ones) == pytest.approx(1.0, rel=1e-12)
    for D in (M - M.T, K - K.T):
        assert D.nnz == 0 or np.abs(D.data).max() < 1e-14
    b = load(0.3)
    assert b.sum() == pytest.approx(1.0, rel=1e-12)


def test_spatial_operators_reject_refined_meshes():
    d = 1
    grid = BaseGrid(spatial_origin=(0.0,), spatial_extent=(1.0,),
                    spatial_counts=(2,), slab_duration=0.5, slab_count=1,
                    elements_per_slab=1)
    mesh = build_slab_mesh(grid, 0, lambda pts: np.ones(len(pts)), max_level=1)
    dm = build_basis(mesh, [(1, 1), (1, 1)])
    with pytest.raises(ValueError, match="unrefined"):
        spatial_operators(dm)


def test_theta_march_matches_scalar_recurrence():
    lam, dt, n = 3.0, 0.1, 6
    M = sp.csr_matrix(np.asarray([[1.0]]))
    K = sp.csr_matrix(np.asarray([[lam]]))
    hist = theta_march(M, K, lambda t: np.zeros(1), np.asarray([1.0]),
                       dt, n, theta=0.5)
    growth = (1.0 / dt - 0.5 * lam) / (1.0 / dt + 0.5 * lam)
    for step, u in enumerate(hist):
        assert u[0] == pytest.approx(growth ** step, rel=1e-13)
