import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nystrom3d import trig
from nystrom3d.errors import ParameterError
from nystrom3d.geometry import grid, smooth_step, transition_map
from nystrom3d.kernels import KernelSplit, kernel_reg, kernel_sing, polar_kernel_values
from nystrom3d.oracle import adaptive_integral_2d, adaptive_integral_polar
from nystrom3d.quadrature import (PolarCutoff, apply_regular, apply_singular_hermite,
                                  apply_singular_L, branch, c_weight, grid_offset,
                                  make_polar_rule, polar_rule_nodes, quad_Qhkg, radial_nodes)


def smooth_density(N):
    coeffs = (trig.TrigPoly.mode(N, 1, 0).coeffs + 0.5 * trig.TrigPoly.mode(N, 0, 1).coeffs
              - 0.25j * trig.TrigPoly.mode(N, -1, 2).coeffs)
    return trig.TrigPoly(coeffs)


def test_angle_weight_and_branch():
    assert c_weight(0.0) == 1.0 and branch(0.0) == "vertical"
    assert c_weight(math.pi / 4) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert branch(math.pi / 4) == "vertical"
    assert branch(3 * math.pi / 4) == "vertical"
    assert c_weight(math.pi / 2) == pytest.approx(1.0, rel=1e-15)
    assert branch(math.pi / 2) == "horizontal"
    th = np.linspace(0, 2 * math.pi, 1001)
    c = c_weight(th)
    assert np.all((c >= 1.0) & (c <= math.sqrt(2) * (1 + 1e-15)))
    assert set(branch(th)) == {"vertical", "horizontal"}


def test_polar_rule_layout():
    rule = make_polar_rule(16)
    assert rule.Theta == 2 * round(2 * 16**1.5 / 2) == 128
    assert rule.k == pytest.approx(2 * math.pi / 128)
    assert rule.thetas.size == 64
    for N in (8, 16, 32, 64):
        ratio = make_polar_rule(N).Theta / N**1.5
        assert 1.9 <= ratio <= 2.1
    with pytest.raises(ParameterError):
        make_polar_rule(2)


def test_radial_node_examples():
    nodes = radial_nodes((0.3, 0.5), 0.0, 0.1, 10)
    assert nodes.branch == "vertical"
    assert nodes.radii[2] == pytest.approx(-0.1)
    assert np.allclose(nodes.points[2], (0.2, 0.5))
    nodes = radial_nodes((0.3, 0.5), math.pi / 2, 0.1, 10)
    assert nodes.branch == "horizontal"
    assert nodes.radii[7] == pytest.approx(0.2)
    assert np.allclose(nodes.points[7], (0.3, 0.7))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 0.999), st.floats(0.0, 0.999))
def test_radial_node_spacing_and_grid_lines(theta, z1, z2):
    N = 16
    h = 1 / N
    nodes = radial_nodes((z1, z2), theta, h, N)
    gaps = np.linalg.norm(np.diff(nodes.points, axis=0), axis=-1)
    assert np.allclose(gaps, float(c_weight(theta)) * h, rtol=1e-12)
    col = 0 if nodes.branch == "vertical" else 1
    assert np.array_equal(nodes.points[:, col], nodes.q * h)
    e = np.array([math.cos(theta), math.sin(theta)])
    assert np.allclose((z1, z2) + nodes.radii[:, None] * e, nodes.points, atol=1e-12)


def test_grid_offset_puts_nodes_on_grid_lines():
    h = 1 / 32
    center = np.array([0.3141, 0.2718])
    rho, theta, w = polar_rule_nodes(0.3, grid_offset(center, h), h, 2 * math.pi / 200)
    pts = center + rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], -1)
    vertical = np.abs(np.cos(theta)) >= np.abs(np.sin(theta)) * (1 - 1e-12)
    on_line = np.where(vertical, pts[:, 0], pts[:, 1]) / h
    assert np.max(np.abs(on_line - np.round(on_line))) < 1e-11
    assert np.all(np.abs(rho) < 0.3)
    assert np.allclose(w, (2 * math.pi / 200) * h * c_weight(theta))


def test_apply_regular_zero_and_linear(sphere, split, rng):
    N = 16
    targets = grid(sphere, 0, N).u[:7]
    assert np.all(apply_regular(split, sphere, 0, 1, None, np.zeros((N, N)), targets) == 0.0)
    a = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    b = rng.standard_normal((N, N))
    lhs = apply_regular(split, sphere, 0, 2, None, 2 * a - 3j * b, targets)
    rhs = 2 * apply_regular(split, sphere, 0, 2, None, a, targets) \
        - 3j * apply_regular(split, sphere, 0, 2, None, b, targets)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(lhs))
    g = grid(sphere, 2, N)
    flat = apply_regular(split, sphere, 0, 2, None, a.reshape(-1)[g.flat], targets, N=N)
    assert np.array_equal(flat, apply_regular(split, sphere, 0, 2, None, a, targets))
    with pytest.raises(ParameterError):
        apply_regular(split, sphere, 0, 2, None, a.reshape(-1)[g.flat], targets)


def test_apply_regular_matches_loop(sphere, split):
    N = 8
    values = np.cos(np.arange(N * N)).reshape(N, N) + 0.5j
    targets = grid(sphere, 0, N).u[::5]
    got = apply_regular(split, sphere, 0, 4, None, values, targets)
    g = grid(sphere, 4, N)
    for t, u in enumerate(targets):
        r = sphere.charts[0].map(u[None])[0]
        acc = 0.0
        for m in range(g.size):
            acc += (kernel_reg(split, r, g.points[m], g.normals[m]) * g.jac[m] * g.omega[m]
                    * values.reshape(-1)[g.flat[m]]) / N**2
        assert abs(got[t] - acc) < 1e-12


def test_apply_regular_converges_to_adaptive_integral(sphere, split):
    u = np.array([[0.5, 0.5]])
    r = sphere.charts[0].map(u)[0]

    def integrand(v):
        rp, nu, jac = sphere.charts[0].evaluate(v)
        return kernel_reg(split, r, rp, nu) * jac * sphere.omega(0, v)

    exact, est = adaptive_integral_2d(integrand, [0.05, 0.05], [0.95, 0.95], rtol=1e-12)
    assert est < 1e-11
    errs = [abs(apply_regular(split, sphere, 0, 0, None, np.ones((N, N)), u)[0] - exact)
            for N in (64, 128, 256)]
    assert errs[2] < 1e-6
    assert errs[2] < errs[0] / 100


def test_trapezoid_is_super_algebraic(sphere):
    def trap(N):
        g = grid(sphere, 0, N)
        return np.sum(g.omega * g.jac * np.exp(2j * math.pi * (g.u[:, 0] + 2 * g.u[:, 1]))) / N**2

    ref = trap(512)
    e32, e64 = abs(trap(32) - ref), abs(trap(64) - ref)
    assert e32 / e64 > 2**6


def test_apply_singular_zero_and_outside(sphere, split):
    N = 16
    rule = make_polar_rule(N)
    u = grid(sphere, 0, N).u
    zero = trig.TrigPoly(np.zeros((N, N), dtype=complex))
    out = apply_singular_L(split, sphere, 0, 0, None, rule, zero, u[:5])
    assert np.all(out == 0.0)
    # the centre of the +x chart is far from the support of the -x chart
    far = apply_singular_L(split, sphere, 0, 1, None, rule, smooth_density(N), [[0.5, 0.5]])
    assert far[0] == 0.0
    herm = apply_singular_hermite(split, sphere, 0, 0, None, rule, zero, 2, 2, u[:3])
    assert np.all(herm == 0.0)
    with pytest.raises(ParameterError):
        apply_singular_hermite(split, sphere, 0, 0, None, rule, zero, 0, 2, u[:3])
    with pytest.raises(ParameterError):
        apply_singular_L(split, sphere, 0, 0, None, make_polar_rule(8), zero, u[:3])


def test_apply_singular_is_linear(sphere, split, rng):
    N = 16
    rule = make_polar_rule(N)
    a = trig.TrigPoly(rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
    b = trig.TrigPoly(rng.standard_normal((N, N)) + 0j)
    targets = grid(sphere, 2, N).u[::9]
    comb = trig.TrigPoly(2 * a.coeffs - 1j * b.coeffs)
    lhs = apply_singular_L(split, sphere, 2, 0, None, rule, comb, targets)
    rhs = 2 * apply_singular_L(split, sphere, 2, 0, None, rule, a, targets) \
        - 1j * apply_singular_L(split, sphere, 2, 0, None, rule, b, targets)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(lhs)))


def brute_singular(split, atlas, i, j, rule, density, u):
    """Full-turn double loop with pointwise interpolant evaluation."""
    N, h, k = rule.N, rule.h, rule.k
    chart = atlas.charts[j]
    r = atlas.charts[i].map(u[None])[0]
    if atlas.distance_to_support(j, r[None])[0] >= atlas.eps1 * split.delta + 1e-6:
        return 0.0
    z = transition_map(atlas, i, j, u[None])[0]
    acc = 0.0
    for p in range(rule.Theta):
        th = p * k
        e = np.array([math.cos(th), math.sin(th)])
        vertical = abs(math.cos(th)) >= abs(math.sin(th)) * (1 - 1e-12)
        for q in range(-N, 2 * N):
            rho = (q * h - z[0]) / e[0] if vertical else (q * h - z[1]) / e[1]
            node = z + rho * e
            if not chart.in_domain(node[None])[0]:
                continue
            if rho == 0.0:
                val = polar_kernel_values(split, atlas, j, z, 0.0, e)
            else:
                rp, nup, jac = chart.evaluate(node[None])
                if np.linalg.norm(r - rp[0]) >= atlas.eps1 * split.delta:
                    continue
                val = abs(rho) * kernel_sing(split, r, rp[0], nup[0]) * jac[0]
            acc += 0.5 * h * k * float(c_weight(th)) * val * trig.eval_point(density, node[None])[0]
    return acc


@pytest.mark.parametrize("N,pair", [(8, (0, 0)), (8, (0, 2)), (16, (2, 4))])
def test_apply_singular_matches_brute_force(sphere, split, N, pair):
    rule = make_polar_rule(N)
    dens = smooth_density(N)
    i, j = pair
    targets = grid(sphere, i, N).u[:: max(1, grid(sphere, i, N).size // 6)]
    got = apply_singular_L(split, sphere, i, j, None, rule, dens, targets)
    ref = np.array([brute_singular(split, sphere, i, j, rule, dens, u) for u in targets])
    assert np.any(ref != 0.0)
    assert np.max(np.abs(got - ref)) < 1e-12


def test_apply_singular_approaches_continuous_operator(sphere, split):
    z = np.array([0.5, 0.5])
    dens16 = smooth_density(16)

    def integrand(rho, theta):
        e = np.stack([np.cos(theta), np.sin(theta)], -1)
        return 0.5 * polar_kernel_values(split, sphere, 0, z, rho, e) * trig.eval_point(
            dens16, z + rho[:, None] * e)

    exact, est = adaptive_integral_polar(integrand, 0.42, rtol=1e-10)
    errs = []
    for N in (16, 32, 64):
        got = apply_singular_L(split, sphere, 0, 0, None, make_polar_rule(N), smooth_density(N),
                               z[None])[0]
        errs.append(abs(got - exact) / abs(exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 5e-3


def test_hermite_variant_approaches_base(sphere, split):
    N = 16
    rule = make_polar_rule(N)
    u = np.array([[0.4623, 0.5377], [0.31, 0.66]])
    dens = smooth_density(N)
    base = apply_singular_L(split, sphere, 0, 0, None, rule, dens, u)
    herm = apply_singular_hermite(split, sphere, 0, 0, None, rule, dens, 16, 2, u)
    assert np.max(np.abs(herm - base)) < 1e-10

    mode = trig.TrigPoly.mode(N, 1, 0)
    base = apply_singular_L(split, sphere, 0, 0, None, rule, mode, u[:1])[0]
    ms = np.array([2, 4, 8, 16])
    diffs = [abs(apply_singular_hermite(split, sphere, 0, 0, None, rule, mode, m, 1, u[:1])[0]
                 - base) for m in ms]
    order = -np.polyfit(np.log(ms), np.log(diffs), 1)[0]
    assert abs(order - 4) <= 0.4


def test_quad_rule_zero_and_bump():
    center = (0.3141, 0.2718)
    assert quad_Qhkg(PolarCutoff(lambda r, t: np.ones_like(r), 0.2),
                     trig.TrigPoly(np.zeros((8, 8), dtype=complex)),
                     grid_offset(center, 1 / 8), 1 / 8, 2 * math.pi / 40, center) == 0.0
    errs, bounds = [], []
    for N in (32, 64, 128):
        h = 1 / N
        delta = h ** (1 / 3)
        chi = PolarCutoff(lambda r, t, d=delta: smooth_step((np.abs(r) / d - 0.3) / 0.7), delta)
        rule = make_polar_rule(N)
        one = trig.TrigPoly.mode(N, 0, 0)
        got = quad_Qhkg(chi, one, grid_offset(center, h), h, rule.k, center)
        exact, _ = adaptive_integral_polar(lambda r, t: chi(r, t) + 0j, delta)
        errs.append(abs(got - exact))
        bounds.append(h / delta * abs(math.log(h)) + delta)
    assert all(e <= b for e, b in zip(errs, bounds))
    assert errs[-1] < errs[0]
    with pytest.raises(ParameterError):
        polar_rule_nodes(0.1, lambda t: 0.0, 0.1, 0.3)


def test_split_with_explicit_delta(sphere, params):
    rule = make_polar_rule(16)
    split = KernelSplit(params, sphere.cutoff, sphere.delta0)
    u = np.array([[0.5, 0.5]])
    dens = smooth_density(16)
    half = KernelSplit(params, sphere.cutoff, sphere.delta0 / 2)
    assert apply_singular_L(split, sphere, 0, 0, sphere.delta0 / 2, rule, dens, u)[0] == \
        apply_singular_L(half, sphere, 0, 0, None, rule, dens, u)[0]
