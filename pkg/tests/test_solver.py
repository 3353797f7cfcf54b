import math

import numpy as np
import pytest

from nystrom3d.errors import DomainError, ParameterError, ProximityError, ResourceError, SolverError
from nystrom3d.geometry import grid
from nystrom3d.oracle import MieSeries
from nystrom3d.quadrature import make_polar_rule
from nystrom3d.solver import (RHS, DiscreteDensity, NystromOperator, apply_operator,
                              assemble_dense, assemble_psi, delta_schedule, evaluate_potential,
                              plane_wave, plane_wave_rhs, reconstruct, solve)


def fibonacci(n, radius=1.0):
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    azim = math.pi * (1 + 5**0.5) * i
    return radius * np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar),
                              np.cos(polar)], -1)


@pytest.fixture(scope="module")
def small(sphere, params):
    N = 8
    delta = delta_schedule(sphere, N)
    rule = make_polar_rule(N)
    return N, delta, rule, NystromOperator(params, sphere, N, delta, rule)


@pytest.fixture(scope="module")
def solved(sphere, params):
    N = 16
    delta = delta_schedule(sphere, N)
    rule = make_polar_rule(N)
    rhs = plane_wave_rhs(params, sphere, delta, rule)
    return solve(params, sphere, delta, rule, rhs)


def test_delta_schedule(sphere):
    assert delta_schedule(sphere, 16) == sphere.delta0
    assert delta_schedule(sphere, 4096, beta=1 / 3) == pytest.approx(4096 ** (-1 / 3))
    with pytest.raises(ParameterError):
        delta_schedule(sphere, 16, beta=0.0)


def test_discrete_density_round_trip(small, rng):
    N, _, _, op = small
    flat = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
    dens = op.density(flat)
    assert [v.size for v in dens.values] == op.sizes
    assert np.array_equal(DiscreteDensity.from_flat(N, op.sizes, dens.flat()).flat(), flat)
    with pytest.raises(ParameterError):
        DiscreteDensity.from_flat(N, op.sizes, flat[:-1])
    with pytest.raises(ParameterError):
        DiscreteDensity(N, (np.array([np.nan]),))


def test_dense_columns_match_matvec(small, rng):
    N, delta, rule, op = small
    A = op.dense()
    for k in rng.choice(op.n, 20, replace=False):
        e = np.zeros(op.n, dtype=complex)
        e[k] = 1.0
        assert np.max(np.abs(A[:, k] - op.matvec(e))) < 1e-12
    phi = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
    assert np.max(np.abs(A @ phi - op.matvec(phi))) < 1e-12


def test_apply_operator_identity_part_and_linearity(sphere, params, small, rng):
    N, delta, rule, op = small
    phi = op.density(rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n))
    half = apply_operator(params, sphere, delta, rule, phi, include_kernels=False)
    assert np.array_equal(half.flat(), 0.5 * phi.flat())
    a, b = rng.standard_normal(op.n), rng.standard_normal(op.n) * 1j
    lhs = apply_operator(params, sphere, delta, rule, op.density(a + 2 * b)).flat()
    rhs = (apply_operator(params, sphere, delta, rule, op.density(a)).flat()
           + 2 * apply_operator(params, sphere, delta, rule, op.density(b)).flat())
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    zero = apply_operator(params, sphere, delta, rule, op.density(np.zeros(op.n)))
    assert np.all(zero.flat() == 0.0)
    with pytest.raises(ParameterError):
        apply_operator(params, sphere, delta, rule, DiscreteDensity(N, (np.zeros(3),)))


def test_dense_matrix_structure(sphere, params, small):
    N, delta, rule, op = small
    A = assemble_dense(params, sphere, delta, rule)
    sv = np.linalg.svd(A, compute_uv=False)
    near_half = np.mean((sv >= 0.1) & (sv <= 0.75))
    assert near_half >= 0.8
    with pytest.raises(ResourceError):
        op.dense(cap=10)


def test_thread_count_does_not_change_results(sphere, params, small, rng):
    N, delta, rule, _ = small
    one = NystromOperator(params, sphere, N, delta, rule, threads=1)
    many = NystromOperator(params, sphere, N, delta, rule, threads=4)
    phi = rng.standard_normal(one.n) + 1j * rng.standard_normal(one.n)
    assert np.array_equal(one.matvec(phi), many.matvec(phi))


def test_dense_and_gmres_agree(sphere, params, small):
    N, delta, rule, op = small
    rhs = plane_wave_rhs(params, sphere, delta, rule)
    it = solve(params, sphere, delta, rule, rhs)
    dn = solve(params, sphere, delta, rule, rhs, method="dense")
    assert np.max(np.abs(it.density.flat() - dn.density.flat())) < 1e-10
    assert it.residual <= 1e-12 * 10 and dn.residual < 1e-12
    assert it.iterations > 0 and dn.method == "dense"
    zero = RHS(op.density(np.zeros(op.n)), rhs.direction)
    assert np.all(solve(params, sphere, delta, rule, zero).density.flat() == 0.0)
    with pytest.raises(ParameterError):
        solve(params, sphere, delta, rule, rhs, method="lu")


def test_solver_error_reports_history(sphere, params, small):
    N, delta, rule, _ = small
    rhs = plane_wave_rhs(params, sphere, delta, rule)
    with pytest.raises(SolverError) as info:
        solve(params, sphere, delta, rule, rhs, restart=2, maxiter=1)
    assert len(info.value.residuals) >= 1


def test_plane_wave_solves_helmholtz():
    kappa, d = 1.7, np.array([0.6, 0.0, 0.8])
    x = np.array([[0.3, -0.4, 0.9]])
    hfd = 1e-3
    lap = -6 * plane_wave(kappa, d, x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = hfd
        lap = lap + plane_wave(kappa, d, x + e) + plane_wave(kappa, d, x - e)
    lap /= hfd**2
    u = plane_wave(kappa, d, x)
    assert abs(lap + kappa**2 * u)[0] / abs(kappa**2 * u[0]) < 1e-4


def test_reconstruction_reproduces_grid_values(solved):
    op = solved.operator
    for i in (0, 3):
        g = grid(op.atlas, i, op.N)
        psi = reconstruct(solved, i, g.u)
        scale = np.max(np.abs(solved.density.flat()))
        assert np.max(np.abs(psi - solved.density.values[i])) < 10 * 1e-12 * scale
    with pytest.raises(DomainError):
        reconstruct(solved, 0, [[0.0, 0.5]])


def test_chart_polynomial_matches_weighted_density(solved):
    op = solved.operator
    for j in range(op.atlas.J):
        vals = solved.chart_polynomial(j).grid_values().reshape(-1)
        g = op.grids[j]
        expect = np.zeros(op.N * op.N, dtype=complex)
        expect[g.flat] = g.omega * solved.density.values[j]
        assert np.max(np.abs(vals - expect)) < 1e-12


def test_assembled_density_matches_exact_sphere_density(solved):
    op = solved.operator
    mie = MieSeries(1.0)
    pts = fibonacci(60)
    psi = assemble_psi(solved, pts)
    exact = mie.density(pts)
    assert np.linalg.norm(psi - exact) / np.linalg.norm(exact) < 0.05
    # a grid point covered by its own chart only reproduces the chart value
    w = op.atlas.pou(op.grids[0].points)
    lone = np.flatnonzero(w[0] > 1 - 1e-15)[0]
    single = assemble_psi(solved, op.grids[0].points[lone:lone + 1])[0]
    assert abs(single - reconstruct(solved, 0, op.grids[0].u[lone:lone + 1])[0]) < 1e-12
    with pytest.raises(DomainError):
        assemble_psi(solved, [[1.1, 0.0, 0.0]])


def test_surface_norm_two_routes(sphere):
    # POU-weighted trapezoid on the grids vs the closed-form surface integral
    def f(p):
        return 1.0 + p[:, 2] ** 2

    exact = 4 * math.pi + 4 * math.pi / 3
    total = 0.0
    for j in range(sphere.J):
        g = grid(sphere, j, 64)
        total += np.sum(g.jac * g.omega * f(g.points)) / 64**2
    assert abs(total - exact) < 1e-8 * exact


def test_potential_against_mie_and_decay(solved):
    mie = MieSeries(1.0)
    probes = fibonacci(40, 2.0)
    u = evaluate_potential(solved, probes)
    field = mie.scattered_field(probes)
    field_err = np.linalg.norm(u - field) / np.linalg.norm(field)
    dens_pts = fibonacci(60)
    dens_err = np.linalg.norm(assemble_psi(solved, dens_pts) - mie.density(dens_pts)) / \
        np.linalg.norm(mie.density(dens_pts))
    assert field_err < dens_err
    far = np.array([[0.0, 600.0, 800.0]])
    ratio = abs(evaluate_potential(solved, 2 * far)[0]) / abs(evaluate_potential(solved, far)[0])
    assert abs(ratio - 0.5) < 0.01
    with pytest.raises(ProximityError):
        evaluate_potential(solved, [[0.0, 0.0, 1.0 + 1e-3]])
    with pytest.raises(ProximityError):
        evaluate_potential(solved, [[0.1, 0.0, 0.0]])


def test_zero_density_potential(solved):
    op = solved.operator
    from nystrom3d.solver import NystromSolution
    empty = NystromSolution(op, op.density(np.zeros(op.n)), solved.direction, 0, 0.0)
    assert np.all(evaluate_potential(empty, [[0.0, 0.0, 3.0]]) == 0.0)


def test_solution_snapshot(solved):
    snap = solved.snapshot()
    assert snap["N"] == 16 and snap["variant"] == "base"
    assert snap["residual"] <= 1e-11
    assert snap["Theta"] == 128
