"""Trapezoidal and polar-coordinate quadrature engines.

The regular part of the operator is integrated by the plain trapezoidal rule
on each chart grid.  The singular part uses trapezoidal rules in polar
coordinates ``(rho, theta)`` centred at the target, with radial nodes placed
where each ray crosses grid lines: for ``|cos theta| >= sqrt(2)/2`` the nodes
sit on the lines ``u1 = q h`` and otherwise on ``u2 = q h``.  The density is
then only ever evaluated on grid lines, which reduces every evaluation to a
univariate trigonometric (or Hermite) interpolation of one column or row of
grid values.

Radii are signed, ``rho_q = (q h - z1) / cos(theta)``, so that a ray and its
reversal ``theta + pi`` produce the same node set.  The number of angles
``Theta`` is even and the sum over ``p`` runs over the half turn
``0 <= theta_p < pi`` with the factor ``h k`` instead of ``h k / 2``.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import trig
from .errors import NumericalError, ParameterError
from .geometry import grid, transition_map
from .kernels import k0_values, k1_values, polar_kernel_values

__all__ = [
    "PolarRule",
    "RadialNodeSet",
    "PolarCutoff",
    "make_polar_rule",
    "c_weight",
    "branch",
    "radial_nodes",
    "apply_regular",
    "apply_singular_L",
    "apply_singular_hermite",
    "singular_row_weights",
    "regular_kernel_matrix",
    "quad_Qhkg",
    "polar_rule_nodes",
    "grid_offset",
]

log = logging.getLogger(__name__)

_TIE = 1.0 - 4.0 * np.finfo(float).eps
#: Distance slack when deciding whether a target sees the support of ``omega^j``.
MEMBERSHIP_SLACK = 1e-6


def c_weight(theta):
    """Radial spacing factor ``c(theta) = min(1/|cos theta|, 1/|sin theta|)``."""
    theta = np.asarray(theta, dtype=float)
    return 1.0 / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))


def _is_vertical(theta):
    theta = np.asarray(theta, dtype=float)
    return np.abs(np.cos(theta)) >= np.abs(np.sin(theta)) * _TIE


def branch(theta):
    """``'vertical'`` (nodes on lines ``u1 = q h``) iff ``|cos theta| >= sqrt(2)/2``."""
    v = _is_vertical(theta)
    if np.ndim(v) == 0:
        return "vertical" if v else "horizontal"
    return np.where(v, "vertical", "horizontal")


@dataclass(frozen=True)
class PolarRule:
    """Angular layout of the polar rule on a grid of order ``N``.

    ``Theta`` is even; ``thetas``, ``weights`` and ``vertical`` describe the
    first ``Theta / 2`` angles, which suffice because of the signed radii.
    """

    N: int
    Theta: int
    alpha: float

    def __post_init__(self):
        if self.Theta < 4 or self.Theta % 2:
            raise ParameterError("Theta must be an even integer >= 4")

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def k(self):
        return 2.0 * math.pi / self.Theta

    @property
    def all_thetas(self):
        return np.arange(self.Theta) * self.k

    @property
    def thetas(self):
        return np.arange(self.Theta // 2) * self.k

    @property
    def weights(self):
        return c_weight(self.thetas)

    @property
    def vertical(self):
        return _is_vertical(self.thetas)


def make_polar_rule(N, alpha=0.5, theta_factor=2.0):
    """``Theta = 2 round(theta_factor N^(1 + alpha) / 2)`` angles."""
    if N < 4:
        raise ParameterError("N must be at least 4")
    if alpha <= 0 or theta_factor <= 0:
        raise ParameterError("alpha and theta_factor must be positive")
    Theta = 2 * max(2, int(round(theta_factor * N ** (1.0 + alpha) / 2.0)))
    return PolarRule(int(N), Theta, float(alpha))


@dataclass(frozen=True)
class RadialNodeSet:
    """Nodes of one ray: grid-line indices ``q``, signed radii and points."""

    branch: str
    q: np.ndarray
    radii: np.ndarray
    points: np.ndarray


def radial_nodes(z, theta, h, N):
    """Intersections of the line ``z + rho e(theta)`` with the grid lines ``q h``."""
    z = np.asarray(z, dtype=float)
    q = np.arange(N)
    c, s = math.cos(theta), math.sin(theta)
    if _is_vertical(theta):
        rho = (q * h - z[0]) / c
        pts = np.stack([q * h, z[1] + rho * s], -1)
        return RadialNodeSet("vertical", q, rho, pts)
    rho = (q * h - z[1]) / s
    pts = np.stack([z[0] + rho * c, q * h], -1)
    return RadialNodeSet("horizontal", q, rho, pts)


# ---------------------------------------------------------------------------
# regular part


def regular_kernel_matrix(split, atlas, targets, sources, source_weights):
    """Dense ``K_reg(r_t, r_s) * source_weights[s]`` for surface points.

    Uses the quadric identity for ``(r_t - r_s) . nu_s``; coincident points
    receive the diagonal limit of ``K0``.
    """
    p = split.params
    diff = targets[:, None, :] - sources[None, :, :]
    s = np.sqrt(np.einsum("tsk,tsk->ts", diff, diff))
    dot = atlas.normal_offset(diff, sources[None, :, :])
    out = k0_values(s, dot, p.kappa, p.eta)
    weight = 1.0 - split.eta_delta(s)
    live = weight > 0.0
    safe = np.where(live, s, 1.0)
    out += np.where(live, weight * k1_values(safe, dot, p.kappa, p.eta), 0.0)
    out *= source_weights[None, :]
    return out


def _with_delta(split, delta):
    if delta is None or delta == split.delta:
        return split
    return replace(split, delta=delta)


def apply_regular(split, atlas, i, j, delta, density, targets, N=None):
    """Trapezoidal sum ``h^2 sum_m K^{ij}_reg(u, x_m) omega^j_m phi^j_m``.

    Parameters
    ----------
    density : array_like
        Either an ``N x N`` array of grid values (only ``Omega^j_h`` is read)
        or the values ``phi^j_m`` on ``Omega^j_h`` in :func:`grid` order, in
        which case ``N`` must be given.
    targets : array_like, shape (n, 2)
        Parameter points of chart ``i``.
    """
    split = _with_delta(split, delta)
    density = np.asarray(density, dtype=complex)
    if density.ndim == 2:
        N = density.shape[0]
        g = grid(atlas, j, N)
        density = density.reshape(-1)[g.flat]
    else:
        if N is None:
            raise ParameterError("N is required for densities given on Omega^j_h")
        g = grid(atlas, j, N)
        if density.shape != (g.size,):
            raise ParameterError("density does not match Omega^%d_h" % j)
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    r_t = atlas.charts[i].map(t)
    w = g.jac * g.omega / g.N**2
    return regular_kernel_matrix(split, atlas, r_t, g.points, w) @ density


# ---------------------------------------------------------------------------
# singular part


def _members(atlas, j, points, delta):
    d = atlas.distance_to_support(j, points)
    return d < atlas.eps1 * delta + MEMBERSHIP_SLACK


def _radial_reach(atlas, j, z, delta, h):
    """Parameter radius beyond which ``|r^j(z + rho e) - r^j(z)| >= eps1 delta``."""
    chart = atlas.charts[j]
    t1, t2 = chart.tangents(z)
    g11 = np.sum(t1 * t1, -1)
    g12 = np.sum(t1 * t2, -1)
    g22 = np.sum(t2 * t2, -1)
    lam = 0.5 * (g11 + g22) - np.sqrt(0.25 * (g11 - g22) ** 2 + g12**2)
    target = atlas.eps1 * delta
    rho = target / np.sqrt(lam)
    ang = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    e = np.stack([np.cos(ang), np.sin(ang)], -1)
    for _ in range(6):
        du = rho[:, None, None] * e[None]
        s = np.linalg.norm(chart.secant(z[:, None, :], du), axis=-1)
        est = rho * np.max(target / s, axis=1)
        rho = np.maximum(rho, 1.15 * est + h)
        du = rho[:, None, None] * e[None]
        s = np.linalg.norm(chart.secant(z[:, None, :], du), axis=-1)
        if np.all(s.min(axis=1) > target):
            return rho
    raise NumericalError("could not bound the cut-off support in parameter space")


def _node_weights(split, atlas, j, rule, z, reach, vertical):
    """Quadrature weights of all polar nodes on one branch for a block of targets.

    Returns ``(line_index, coordinate, weight)`` with shapes ``(nt, NL)``,
    ``(nt, na, NL)`` and ``(nt, na, NL)``; ``coordinate`` is the position of the
    node along its grid line.
    """
    h = rule.h
    sel = rule.vertical if vertical else ~rule.vertical
    th = rule.thetas[sel]
    cw = rule.weights[sel]
    a, b = (0, 1) if vertical else (1, 0)
    cos_a = np.cos(th) if vertical else np.sin(th)
    sin_b = np.sin(th) if vertical else np.cos(th)
    za, zb = z[:, a], z[:, b]
    q_lo = np.ceil((za - reach) / h - 1e-12).astype(int)
    q_hi = np.floor((za + reach) / h + 1e-12).astype(int)
    count = q_hi - q_lo + 1
    NL = int(count.max())
    if NL > rule.N:
        raise ParameterError("cut-off support wider than the chart grid; reduce delta")
    q = q_lo[:, None] + np.arange(NL)[None, :]
    valid = np.arange(NL)[None, :] < count[:, None]
    rho = (q[:, None, :] * h - za[:, None, None]) / cos_a[None, :, None]
    coord = zb[:, None, None] + rho * sin_b[None, :, None]
    e = np.stack([np.cos(th), np.sin(th)], -1)
    vals = polar_kernel_values(split, atlas, j, z[:, None, None, :], rho, e[None, :, None, :])
    w = (h * rule.k) * cw[None, :, None] * vals
    w = np.where(valid[:, None, :], w, 0.0)
    return q, coord, w


def _line_weights_exact(N, coord, w):
    # F[t, l, k] = sum_a w exp(2 pi i k coord); then weights on the line samples
    k = trig.frequencies(N)
    V = np.exp(2j * math.pi * coord[..., None] * k)
    F = np.einsum("tal,talk->tlk", w, V)
    E = np.exp(-2j * math.pi * np.outer(k, np.arange(N)) / N) / N
    return F @ E


def _line_weights_hermite(N, coord, w, m, d):
    nt, na, NL = coord.shape
    M = N * m
    y = np.mod(coord * M, M)
    cell = np.minimum(np.floor(y).astype(int), M - 1)
    tau = y - cell
    H = trig.hermite_basis(d, tau)  # (nt, na, NL, 2, d+1)
    kf = 1.0 / M
    H = H * (kf ** np.arange(d + 1))
    A = np.zeros((nt, NL, M, d + 1), dtype=complex)
    tt = np.broadcast_to(np.arange(nt)[:, None, None], coord.shape)
    ll = np.broadcast_to(np.arange(NL)[None, None, :], coord.shape)
    for side, idx in ((0, cell), (1, np.mod(cell + 1, M))):
        flat = ((tt * NL + ll) * M + idx)[..., None] * (d + 1) + np.arange(d + 1)
        vals = w[..., None] * H[..., side, :]
        size = nt * NL * M * (d + 1)
        A.reshape(-1)[:] += np.bincount(flat.ravel(), vals.real.ravel(), size) + 1j * np.bincount(
            flat.ravel(), vals.imag.ravel(), size)
    D = trig.line_derivative_matrices(N, m, d)  # (d+1, M, N)
    Dstack = D.transpose(1, 0, 2).reshape(M * (d + 1), N)
    return A.reshape(nt, NL, M * (d + 1)) @ Dstack


def _scatter(W, q, Wl, vertical):
    N = W.shape[1]
    nt, NL = q.shape
    tt = np.arange(nt)[:, None]
    qm = np.mod(q, N)
    if vertical:
        W[tt, qm, :] += Wl
    else:
        Wt = W.transpose(0, 2, 1)
        Wt[tt, qm, :] += Wl


def singular_row_weights(split, atlas, i, j, rule, targets, variant=None, chunk=None):
    """Grid-value weights of the polar rule ``L^{ij}`` for targets of chart ``i``.

    Parameters
    ----------
    targets : ndarray, shape (n, 2)
        Parameter points of chart ``i``.
    variant : None or tuple ``(m, d)``
        ``None`` for exact line interpolation, ``(m, d)`` for the Hermite
        variant with refinement ``m`` and ``d`` matched derivatives.
    chunk : int, optional
        Number of targets processed at once.

    Yields
    ------
    idx : ndarray of int
        Indices (into ``targets``) of a block of targets inside
        ``Omega^{ij}_{delta/2}``.
    W : ndarray, shape (len(idx), N, N)
        ``(L^{ij} xi)(u_idx) = sum_n W[., n] xi(x_n)`` for every ``xi`` in ``T_N``.
        Targets outside ``Omega^{ij}_{delta/2}`` have zero weights and are
        never yielded.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    N = rule.N
    delta = split.delta
    pts = atlas.charts[i].map(targets)
    member = np.flatnonzero(_members(atlas, j, pts, delta))
    if member.size == 0:
        return
    try:
        z = transition_map(atlas, i, j, targets[member])
    except NumericalError as exc:
        raise NumericalError("transition map failed for a target of chart %d in chart %d: %s"
                             % (i, j, exc)) from exc
    reach = _radial_reach(atlas, j, z, delta, rule.h)
    if chunk is None:
        per_target = max(1, rule.Theta // 2) * (2 * int(reach.max() * N) + 3) * N
        chunk = int(max(1, min(256, 4e6 // per_target)))
    for start in range(0, member.size, chunk):
        sl = slice(start, start + chunk)
        zc, rc = z[sl], reach[sl]
        W = np.zeros((zc.shape[0], N, N), dtype=complex)
        for vertical in (True, False):
            if not np.any(rule.vertical == vertical):
                continue
            q, coord, w = _node_weights(split, atlas, j, rule, zc, rc, vertical)
            if variant is None:
                Wl = _line_weights_exact(N, coord, w)
            else:
                m, d = variant
                Wl = _line_weights_hermite(N, coord, w, m, d)
            _scatter(W, q, Wl, vertical)
        yield member[sl], W


def _apply_rows(split, atlas, i, j, delta, rule, density, targets, variant):
    split = _with_delta(split, delta)
    if density.N != rule.N:
        raise ParameterError("density order does not match the polar rule")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros(targets.shape[0], dtype=complex)
    values = density.grid_values()
    for idx, W in singular_row_weights(split, atlas, i, j, rule, targets, variant):
        out[idx] = np.einsum("tab,ab->t", W, values)
    return out


def apply_singular_L(split, atlas, i, j, delta, rule, density, targets):
    """Polar-rule approximation of ``int K^{ij}_sing xi`` at targets of chart ``i``.

    Targets outside ``Omega^{ij}_{delta/2}`` receive exactly zero.
    """
    return _apply_rows(split, atlas, i, j, delta, rule, density, targets, None)


def apply_singular_hermite(split, atlas, i, j, delta, rule, density, m, d, targets):
    """As :func:`apply_singular_L` with Hermite interpolation on the mesh ``h/m`` along lines."""
    if m < 1 or d < 1:
        raise ParameterError("need m >= 1 and d >= 1")
    return _apply_rows(split, atlas, i, j, delta, rule, density, targets, (int(m), int(d)))


# ---------------------------------------------------------------------------
# standalone polar rule


@dataclass(frozen=True)
class PolarCutoff:
    """A polar integrand factor ``chi(rho, theta)`` supported in ``|rho| < support``."""

    func: object
    support: float

    def __call__(self, rho, theta):
        return self.func(rho, theta)


def grid_offset(center, h):
    """Offset ``gamma(theta)`` that places polar nodes on the grid lines ``q h``.

    This is the choice made by the discrete singular operator: radii
    ``(q h - z1) / cos(theta)`` on the vertical branch and
    ``(q h - z2) / sin(theta)`` otherwise, reduced modulo ``c(theta) h``.
    """
    z = np.asarray(center, dtype=float)

    def gamma(theta):
        if _is_vertical(theta):
            g = -z[0] / math.cos(theta)
        else:
            g = -z[1] / math.sin(theta)
        return math.fmod(g, float(c_weight(theta)) * h)

    return gamma


def polar_rule_nodes(support, gamma, h, k):
    """Nodes ``(rho, theta)`` and weights of ``Q_{h,k,gamma}`` restricted to ``|rho| < support``."""
    Theta = int(round(2.0 * math.pi / k))
    if abs(Theta * k - 2.0 * math.pi) > 1e-9:
        raise ParameterError("2 pi / k must be an integer")
    rhos, thetas, weights = [], [], []
    for p in range(Theta):
        th = p * k
        step = float(c_weight(th)) * h
        g = float(gamma(th))
        q = np.arange(math.floor((-support - g) / step), math.ceil((support - g) / step) + 1)
        rho = g + q * step
        rho = rho[np.abs(rho) < support]
        rhos.append(rho)
        thetas.append(np.full(rho.shape, th))
        weights.append(np.full(rho.shape, k * step))
    return np.concatenate(rhos), np.concatenate(thetas), np.concatenate(weights)


def quad_Qhkg(chi, xi, gamma, h, k, center=(0.0, 0.0)):
    """Polar trapezoidal rule ``Q_{h,k,gamma}`` applied to ``chi * xi~``.

    ``xi~(rho, theta) = xi(center + rho e(theta))``.  The radial sum is
    truncated to ``|rho| < chi.support``.

    Parameters
    ----------
    chi : PolarCutoff
    xi : TrigPoly or callable of points ``(..., 2)``
    gamma : callable
        ``2 pi``-periodic offset function ``gamma(theta)``.
    h, k : float
        Radial base spacing and angular step (``k = 2 pi / Theta``).
    """
    evaluate = xi if callable(xi) and not isinstance(xi, trig.TrigPoly) else (
        lambda pts: trig.eval_point(xi, pts))
    rho, theta, w = polar_rule_nodes(chi.support, gamma, h, k)
    if rho.size == 0:
        return 0.0 + 0.0j
    pts = np.asarray(center, dtype=float) + rho[:, None] * np.stack(
        [np.cos(theta), np.sin(theta)], -1)
    return complex(np.sum(w * chi(rho, theta) * evaluate(pts)))
