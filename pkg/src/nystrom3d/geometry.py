"""Overlapping-chart surface geometry.

Every surface handled here is an ellipsoid ``(x/a)^2 + (y/b)^2 + (z/c)^2 = 1``
(the unit sphere being ``a = b = c = 1``).  It is covered by six charts
centred on the axis directions ``+-x, +-y, +-z``.  Chart ``j`` maps the
parameter square ``D^j = [0.05, 0.95]^2`` to the surface through an inverse
stereographic projection (from the antipode of its centre) followed by the
diagonal scaling ``diag(a, b, c)``:

    u  ->  X = (u - 1/2) * L / 0.45          (stereographic plane)
    X  ->  p = (4 X1 e1 + 4 X2 e2 + (4 - |X|^2) c) / (4 + |X|^2)
    p  ->  r = diag(a, b, c) p

The partition of unity is built from tensor-product ``exp(-A/(1 - t^2))``
bumps supported on the square ``|X|_inf < s`` of the stereographic plane and
normalised so that the weights sum to one identically.  The square
``|X|_inf <= 2 tan(pi/8)`` contains the image of a cube face, and ``overlap``
enlarges it to ``s = 2 tan(pi/8) (1 + overlap)``.  The chart square is the
support square padded by a further factor ``1 + padding``.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, NotInOverlapError, NumericalError, ParameterError

__all__ = [
    "Chart",
    "CutoffFamily",
    "Atlas",
    "ChartGrid",
    "smooth_step",
    "chart_eval",
    "build_sphere_atlas",
    "build_ellipsoid_atlas",
    "transition_map",
    "eta_delta",
    "omega_tilde",
    "grid",
]

#: Margin between the chart parameter square ``D^j`` and ``I_2 = (0, 1)^2``.
DOMAIN_MARGIN = 0.05
#: Stereographic half width of the square containing one cube face.
FACE_HALF_WIDTH = 2.0 * math.tan(math.pi / 8.0)

_NEWTON_TOL = 1e-13
_NEWTON_MAXITER = 30


def smooth_step(x):
    """C-infinity transition equal to 1 for ``x <= 0`` and 0 for ``x >= 1``.

    Uses ``exp(2 exp(-1/x) / (x - 1))`` on ``(0, 1)``; every derivative
    vanishes at both junctions.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x <= 0.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    out[mid] = np.exp(2.0 * np.exp(-1.0 / xm) / (xm - 1.0))
    return out


def _bump(t, steepness=1.0):
    """``exp(-steepness/(1 - t^2))`` for ``|t| < 1``, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-steepness / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class Chart:
    """One stereographic chart ``r^j: D^j -> S^j``.

    Attributes
    ----------
    index : int
        Chart number ``j``.
    center, e1, e2 : ndarray, shape (3,)
        Right-handed orthonormal frame; ``center`` is the chart's pole.
    semiaxes : ndarray, shape (3,)
        Ellipsoid semiaxes ``(a, b, c)``.
    half_width : float
        Half width ``L`` of ``D^j`` measured in the stereographic plane.
    support_half_width : float
        Stereographic half width ``s`` of the square ``supp omega^j``.
    steepness : float
        Bump parameter ``A`` of the partition of unity.
    """

    index: int
    center: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    semiaxes: np.ndarray
    half_width: float
    support_half_width: float
    steepness: float = 1.0

    @property
    def scale(self):
        """Stereographic length per unit of parameter."""
        return self.half_width / (0.5 - DOMAIN_MARGIN)

    def plane(self, u):
        return (np.asarray(u, dtype=float) - 0.5) * self.scale

    def in_domain(self, u, tol=1e-14):
        u = np.asarray(u, dtype=float)
        lo, hi = DOMAIN_MARGIN - tol, 1.0 - DOMAIN_MARGIN + tol
        return np.all((u >= lo) & (u <= hi), axis=-1)

    def in_support(self, u):
        """True where ``u`` lies in ``Omega^j``, the open support of ``omega^j o r^j``."""
        X = self.plane(u)
        return np.all(np.abs(X) < self.support_half_width, axis=-1)

    def _sphere(self, X, derivatives=False):
        X1, X2 = X[..., 0:1], X[..., 1:2]
        R2 = X1**2 + X2**2
        Q = 4.0 + R2
        p = (4.0 * X1 * self.e1 + 4.0 * X2 * self.e2 + (4.0 - R2) * self.center) / Q
        if not derivatives:
            return p
        cp = self.center + p
        p1 = (4.0 * self.e1 - 2.0 * X1 * cp) / Q
        p2 = (4.0 * self.e2 - 2.0 * X2 * cp) / Q
        return p, p1, p2

    def map(self, u):
        """Forward map without domain checking (valid on all of R^2)."""
        return self.semiaxes * self._sphere(self.plane(u))

    def evaluate(self, u):
        """Points, outward unit normals and Jacobians ``a^j(u)`` (no domain check)."""
        u = np.asarray(u, dtype=float)
        p, p1, p2 = self._sphere(self.plane(u), derivatives=True)
        r = self.semiaxes * p
        r1 = self.semiaxes * p1 * self.scale
        r2 = self.semiaxes * p2 * self.scale
        jac = np.linalg.norm(np.cross(r1, r2), axis=-1)
        g = p / self.semiaxes
        nu = g / np.linalg.norm(g, axis=-1, keepdims=True)
        return r, nu, jac

    def secant(self, u, du):
        """``r(u + du) - r(u)`` evaluated without cancellation for small ``du``."""
        X = self.plane(u)
        D = np.asarray(du, dtype=float) * self.scale
        X2 = np.sum(X * X, -1, keepdims=True)
        grow = np.sum(D * (2.0 * X + D), -1, keepdims=True)
        Qx = 4.0 + X2
        Qy = Qx + grow
        planar = 4.0 * D + D * X2 - X * grow
        dp = (4.0 * (planar[..., 0:1] * self.e1 + planar[..., 1:2] * self.e2)
              - 8.0 * grow * self.center) / (Qx * Qy)
        return self.semiaxes * dp

    def tangents(self, u):
        """Partial derivatives ``(d r / d u1, d r / d u2)``."""
        _, p1, p2 = self._sphere(self.plane(u), derivatives=True)
        return self.semiaxes * p1 * self.scale, self.semiaxes * p2 * self.scale

    def plane_coordinates(self, points):
        """Stereographic coordinates of surface points and a validity mask.

        Points at the antipode of the chart centre have no image; they are
        flagged invalid and given infinite coordinates.
        """
        p = np.asarray(points, dtype=float) / self.semiaxes
        p = p / np.linalg.norm(p, axis=-1, keepdims=True)
        den = 1.0 + p @ self.center
        valid = den > 1e-12
        safe = np.where(valid, den, 1.0)
        X = 2.0 * np.stack([p @ self.e1, p @ self.e2], axis=-1) / safe[..., None]
        X[~valid] = np.inf
        return X, valid

    def approximate_inverse(self, points):
        """Closed-form preimage (accurate to rounding) and validity mask."""
        X, valid = self.plane_coordinates(points)
        return 0.5 + X / self.scale, valid

    def bump(self, points):
        """Unnormalised partition-of-unity bump evaluated at surface points."""
        X, valid = self.plane_coordinates(points)
        X = np.where(valid[..., None], X, np.inf) / self.support_half_width
        return _bump(X[..., 0], self.steepness) * _bump(X[..., 1], self.steepness)

    def newton_inverse(self, points, u0):
        """Damped Gauss-Newton solve of ``r^j(u) = points`` starting from ``u0``."""
        target = np.asarray(points, dtype=float)
        u = np.array(u0, dtype=float, copy=True)
        res = target - self.map(u)
        err = np.linalg.norm(res, axis=-1)
        for _ in range(_NEWTON_MAXITER):
            t1, t2 = self.tangents(u)
            g11 = np.sum(t1 * t1, -1)
            g12 = np.sum(t1 * t2, -1)
            g22 = np.sum(t2 * t2, -1)
            b1 = np.sum(t1 * res, -1)
            b2 = np.sum(t2 * res, -1)
            det = g11 * g22 - g12**2
            du = np.stack([(g22 * b1 - g12 * b2) / det, (g11 * b2 - g12 * b1) / det], -1)
            step = np.ones(err.shape)
            for _ in range(8):
                trial = u + step[..., None] * du
                new_res = target - self.map(trial)
                new_err = np.linalg.norm(new_res, axis=-1)
                worse = new_err > err * (1 + 1e-12) + 1e-15
                if not np.any(worse):
                    break
                step = np.where(worse, 0.5 * step, step)
            u, res, err = trial, new_res, new_err
            if np.all(np.linalg.norm(du, axis=-1) * step <= _NEWTON_TOL):
                return u
        if np.all(err < 1e-12):
            return u
        raise NumericalError("chart inversion did not converge (max residual %.3e)" % err.max())


@dataclass(frozen=True)
class CutoffFamily:
    """Floating cut-off ``eta_delta(r, r') = upsilon(delta0 |r' - r| / delta)``.

    The radial profile ``upsilon`` equals 1 on ``[0, eps0 delta0]`` and 0 on
    ``[eps1 delta0, inf)`` with a C-infinity blend in between.
    """

    eps0: float
    eps1: float
    delta0: float

    def __post_init__(self):
        if not 0.0 < self.eps0 < self.eps1 <= 1.0:
            raise ParameterError("need 0 < eps0 < eps1 <= 1")
        if self.delta0 <= 0.0:
            raise ParameterError("delta0 must be positive")

    def upsilon(self, s):
        s = np.asarray(s, dtype=float)
        return smooth_step((s / self.delta0 - self.eps0) / (self.eps1 - self.eps0))

    def profile(self, distance, delta):
        """``eta_delta`` as a function of ``|r - r'|`` (vectorised)."""
        t = np.asarray(distance, dtype=float) / delta
        return smooth_step((t - self.eps0) / (self.eps1 - self.eps0))


@dataclass(frozen=True, eq=False)
class Atlas:
    """Chart cover, partition of unity and cut-off parameters of one surface.

    ``overlaps`` lists the ordered chart pairs ``(i, j)`` that interact: the
    bumps overlap or the supports come within ``2 eps1 delta0`` of each other.
    """

    charts: tuple
    semiaxes: np.ndarray
    cutoff: CutoffFamily
    overlap: float
    overlaps: frozenset = field(default_factory=frozenset)

    @property
    def J(self):
        return len(self.charts)

    @property
    def eps0(self):
        return self.cutoff.eps0

    @property
    def eps1(self):
        return self.cutoff.eps1

    @property
    def delta0(self):
        return self.cutoff.delta0

    def bumps(self, points):
        return np.stack([c.bump(points) for c in self.charts])

    def pou(self, points):
        """Partition-of-unity weights ``omega^j(points)``, shape ``(J, ...)``."""
        b = self.bumps(points)
        return b / b.sum(axis=0)

    def omega(self, j, u):
        """``omega^j(r^j(u))`` for parameters ``u`` of chart ``j``."""
        chart = self.charts[j]
        b = self.bumps(chart.map(u))
        return b[j] / b.sum(axis=0)

    def normal_offset(self, diff, rp):
        """Stable ``(r - r') . nu(r')`` for ``diff = r - r'`` on the surface.

        On the quadric ``|D^-1 x| = 1`` one has
        ``(r - r') . D^-2 r' = -|D^-1 (r - r')|^2 / 2``, which keeps full
        relative accuracy as ``r' -> r``.
        """
        g = np.linalg.norm(rp / self.semiaxes**2, axis=-1)
        return -0.5 * np.sum((diff / self.semiaxes) ** 2, axis=-1) / g

    def normal_offset_ratio_limit(self, r, tangent):
        """Limit of ``(r - r').nu(r') / |r - r'|^2`` as ``r' -> r`` along ``tangent``."""
        t = tangent / np.linalg.norm(tangent, axis=-1, keepdims=True)
        g = np.linalg.norm(r / self.semiaxes**2, axis=-1)
        return -0.5 * np.sum((t / self.semiaxes) ** 2, axis=-1) / g

    def support_boundary(self, j, samples=2048):
        chart = self.charts[j]
        s = chart.support_half_width
        t = np.linspace(-s, s, samples // 4, endpoint=False)
        X = np.concatenate([
            np.stack([t, np.full_like(t, -s)], -1),
            np.stack([np.full_like(t, s), t], -1),
            np.stack([-t, np.full_like(t, s)], -1),
            np.stack([np.full_like(t, -s), -t], -1),
        ])
        return chart.map(0.5 + X / chart.scale)

    def distance_to_support(self, j, points, samples=2048):
        """Euclidean distance from surface points to ``supp omega^j`` (sampled boundary)."""
        points = np.asarray(points, dtype=float)
        chart = self.charts[j]
        X, valid = chart.plane_coordinates(points)
        inside = valid & np.all(np.abs(X) <= chart.support_half_width, axis=-1)
        tree = _support_boundary_tree(self, j, samples)
        out, _ = tree.query(points.reshape(-1, 3))
        out = out.reshape(points.shape[:-1])
        return np.where(inside, 0.0, out)

    @functools.cached_property
    def _margins(self):
        return tuple(self._chart_margin(j) for j in range(self.J))

    def chart_margin(self, j, samples=1024):
        """Distance between ``supp omega^j`` and the image of ``boundary(D^j)``."""
        if samples == 1024:
            return self._margins[j]
        return self._chart_margin(j, samples)

    def _chart_margin(self, j, samples=1024):
        lo, hi = DOMAIN_MARGIN, 1.0 - DOMAIN_MARGIN
        s = np.linspace(lo, hi, samples)
        edges = np.concatenate([
            np.stack([s, np.full_like(s, lo)], -1),
            np.stack([s, np.full_like(s, hi)], -1),
            np.stack([np.full_like(s, lo), s], -1),
            np.stack([np.full_like(s, hi), s], -1),
        ])
        return float(self.distance_to_support(j, self.charts[j].map(edges)).min())

    def separation_bound(self):
        """Largest ``delta0`` with ``B(r, eps1 delta0)`` disjoint from ``S^j_{2 delta0}`` off ``S^j``.

        ``S^j_{2 delta0}`` is the ``4 eps1 delta0`` neighbourhood of
        ``supp omega^j``, so the condition reads ``margin_j > 5 eps1 delta0``.
        """
        return min(self.chart_margin(j) for j in range(self.J)) / (5.0 * self.eps1)

    def singular_reach(self):
        """Largest ``delta`` for which every polar target lies inside its chart image.

        Targets of chart ``j`` lie within ``eps1 delta`` of ``supp omega^j``;
        they must be in ``S^j`` so that ``r^{ji}`` is defined there.  Polar
        nodes beyond ``D^j`` sit where the density already vanishes and are
        dropped.
        """
        return min(self.chart_margin(j) for j in range(self.J)) / self.eps1

    def locate(self, points):
        """For each point, the chart with the largest bump and its parameters."""
        b = self.bumps(points)
        best = np.argmax(b, axis=0)
        u = np.empty(np.shape(points)[:-1] + (2,))
        for j, chart in enumerate(self.charts):
            sel = best == j
            if np.any(sel):
                u[sel] = chart.approximate_inverse(np.asarray(points)[sel])[0]
        return best, u


@functools.lru_cache(maxsize=64)
def _support_boundary_tree(atlas, j, samples):
    return cKDTree(atlas.support_boundary(j, samples))


_FACES = (
    (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])),
    (np.array([-1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 0.0])),
    (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])),
    (np.array([0.0, -1.0, 0.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])),
    (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])),
    (np.array([0.0, 0.0, -1.0]), np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])),
)


def _overlap_pairs(charts, samples=48):
    pairs = set()
    for i, ci in enumerate(charts):
        s = ci.support_half_width * np.linspace(-1.0, 1.0, samples + 2)[1:-1]
        X = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
        pts = ci.map(0.5 + X / ci.scale)
        for j, cj in enumerate(charts):
            if np.any(cj.bump(pts) > 0.0):
                pairs.add((i, j))
                pairs.add((j, i))
    return frozenset(pairs)


def _interaction_pairs(atlas, pairs, reach):
    """Add chart pairs whose supports lie within ``reach`` of each other.

    The polar rule couples targets of chart ``i`` with chart ``j`` whenever a
    target is within ``eps1 delta`` of ``supp omega^j``, even if the bumps
    themselves never overlap.
    """
    pairs = set(pairs)
    for i in range(atlas.J):
        edge = atlas.support_boundary(i)
        for j in range(atlas.J):
            if (i, j) not in pairs and atlas.distance_to_support(j, edge).min() < reach:
                pairs.update({(i, j), (j, i)})
    return frozenset(pairs)


def _cube_atlas(semiaxes, overlap, padding, steepness, eps0, eps1, delta0):
    if not 0.0 < overlap < 1.0:
        raise ParameterError("overlap must lie in (0, 1)")
    if not padding > 0.0:
        raise ParameterError("padding must be positive")
    if not steepness > 0.0:
        raise ParameterError("steepness must be positive")
    s = FACE_HALF_WIDTH * (1.0 + overlap)
    L = s * (1.0 + padding)
    charts = []
    for j, (c, e1, e2) in enumerate(_FACES):
        charts.append(Chart(j, c, e1, e2, semiaxes, L, s, steepness))
    charts = tuple(charts)
    pairs = _overlap_pairs(charts)
    provisional = Atlas(charts, semiaxes, CutoffFamily(eps0, eps1, 1.0), overlap, pairs)
    if delta0 is None:
        delta0 = 0.95 * provisional.singular_reach()
    pairs = _interaction_pairs(provisional, pairs, 2.0 * eps1 * delta0)
    atlas = Atlas(charts, semiaxes, CutoffFamily(eps0, eps1, delta0), overlap, pairs)
    # margins depend only on the charts and bumps
    atlas.__dict__["_margins"] = provisional._margins
    return atlas


def build_sphere_atlas(overlap=0.7, eps0=0.05, eps1=1.0, padding=0.4, steepness=4.0,
                       delta0=None):
    """Six-chart atlas of the unit sphere.

    Parameters
    ----------
    overlap : float
        Fractional enlargement, in ``(0, 1)``, of the square containing a
        cube face; the enlarged square is ``supp omega^j``.
    eps0, eps1 : float
        Cut-off plateau and support fractions, ``0 < eps0 < eps1 <= 1``.
    padding : float
        Relative enlargement of the chart square ``D^j`` beyond the support.
    steepness : float
        Parameter ``A`` of the bumps ``exp(-A/(1 - t^2))``.
    delta0 : float, optional
        Maximal cut-off radius.  Defaults to 0.95 times
        :meth:`Atlas.singular_reach`.
    """
    return _cube_atlas(np.ones(3), overlap, padding, steepness, eps0, eps1, delta0)


def build_ellipsoid_atlas(semiaxes, overlap=0.7, eps0=0.05, eps1=1.0, padding=0.4,
                          steepness=4.0, delta0=None):
    """Six-chart atlas of the ellipsoid with the given semiaxes (see :func:`build_sphere_atlas`)."""
    semiaxes = np.asarray(semiaxes, dtype=float)
    if semiaxes.shape != (3,) or np.any(~(semiaxes > 0)):
        raise ParameterError("semiaxes must be three positive numbers")
    return _cube_atlas(semiaxes, overlap, padding, steepness, eps0, eps1, delta0)


def chart_eval(chart, u):
    """Surface point, outward unit normal and Jacobian of ``chart`` at ``u``.

    Raises
    ------
    DomainError
        If any ``u`` lies outside ``D^j``.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(chart.in_domain(u)):
        raise DomainError("parameter outside D^%d" % chart.index)
    return chart.evaluate(u)


def transition_map(atlas, i, j, u):
    """``r^{ji}(u) = (r^j)^{-1}(r^i(u))`` computed by Newton polishing.

    Raises
    ------
    NotInOverlapError
        If ``r^i(u)`` is not in the image of ``D^j``.
    """
    u = np.asarray(u, dtype=float)
    if i == j:
        return u.copy()
    points = atlas.charts[i].map(u)
    cj = atlas.charts[j]
    guess, valid = cj.approximate_inverse(points)
    if not np.all(valid) or not np.all(cj.in_domain(guess, tol=1e-9)):
        raise NotInOverlapError("point of chart %d outside the image of chart %d" % (i, j))
    return cj.newton_inverse(points, guess)


def eta_delta(cutoff, r, rp, delta):
    """Floating cut-off ``eta_delta(r, r')``."""
    if not 0.0 < delta <= cutoff.delta0 * (1 + 1e-12):
        raise ParameterError("delta must lie in (0, delta0]")
    d = np.linalg.norm(np.asarray(rp, dtype=float) - np.asarray(r, dtype=float), axis=-1)
    return cutoff.profile(d, delta)


def omega_tilde(atlas, j, u, delta):
    """Second cut-off family: 1 on ``Omega^{jj}_delta``, supported in ``Omega^{jj}_{3 delta/2}``.

    With ``d`` the distance from ``r^j(u)`` to ``supp omega^j`` the value is
    ``smooth_step((d - 2 eps1 delta) / (eps1 delta))``; ``delta = 0`` gives the
    characteristic function of ``Omega^j``.
    """
    chart = atlas.charts[j]
    u = np.asarray(u, dtype=float)
    inside_D = chart.in_domain(u)
    if delta == 0:
        return np.where(inside_D & chart.in_support(u), 1.0, 0.0)
    d = atlas.distance_to_support(j, chart.map(u))
    e1 = atlas.eps1
    val = smooth_step((d - 2.0 * e1 * delta) / (e1 * delta))
    return np.where(inside_D, val, 0.0)


@dataclass(frozen=True, eq=False)
class ChartGrid:
    """Uniform grid ``x_m = h m`` of one chart and its active index set ``Omega^j_h``.

    Arrays hold active nodes only, in row-major ``(m1, m2)`` order; ``flat``
    gives their position ``m1 * N + m2`` in the full ``N x N`` grid.
    """

    j: int
    N: int
    u: np.ndarray
    flat: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    jac: np.ndarray
    omega: np.ndarray

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def size(self):
        return self.flat.size

    def coordinates(self):
        """All ``N^2`` grid coordinates, shape ``(N, N, 2)``."""
        x = np.arange(self.N) / self.N
        return np.stack(np.meshgrid(x, x, indexing="ij"), -1)


@functools.lru_cache(maxsize=128)
def grid(atlas, j, N):
    """Grid of chart ``j`` with ``N x N`` points and active set ``Omega^j_h``.

    ``Omega^j_h`` holds the nodes inside ``D^j`` at which the partition-of-unity
    weight ``omega^j`` is positive.
    """
    if N < 4:
        raise ParameterError("N must be at least 4")
    chart = atlas.charts[j]
    x = np.arange(N) / N
    U = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    cand = np.flatnonzero(chart.in_domain(U) & chart.in_support(U))
    omega = atlas.omega(j, U[cand])
    keep = omega > 0.0
    flat = cand[keep]
    u = U[flat]
    pts, nu, jac = chart.evaluate(u)
    arrays = [u, flat, pts, nu, jac, omega[keep]]
    for a in arrays:
        a.setflags(write=False)
    return ChartGrid(j, N, *arrays)
