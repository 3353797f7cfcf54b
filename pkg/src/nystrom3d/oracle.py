"""Reference solutions used to validate the solver.

* Separation-of-variables (Mie) series for plane-wave scattering by the
  sound-soft unit sphere, for the scattered field and for the exact density
  of the combined-field representation.
* Adaptive cubature for smooth integrands on rectangles and polar discs.
* A naive loop implementation of the full discrete operator.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
from scipy.special import eval_legendre, jv, spherical_jn, spherical_yn

from . import trig
from .errors import DomainError, OracleError, ParameterError
from .geometry import transition_map
from .kernels import _polar_limit, kernel_reg, kernel_sing
from .quadrature import _is_vertical, c_weight

__all__ = [
    "MieSeries",
    "mie_scattered_field",
    "adaptive_integral_2d",
    "adaptive_integral_polar",
    "polar_mode_integrals",
    "brute_force_apply",
    "brute_force_operator",
]


def _hankel(l, x):
    return spherical_jn(l, x) + 1j * spherical_yn(l, x)


@dataclass(frozen=True)
class MieSeries:
    """Plane wave ``exp(i kappa d . x)`` scattered by the sound-soft unit sphere.

    ``lmax`` defaults to a count that resolves the series to machine precision
    for evaluation radii ``>= 1``.
    """

    kappa: float
    eta: float = None
    lmax: int = None
    direction: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if self.eta is None:
            object.__setattr__(self, "eta", max(1.0, float(self.kappa)))
        if self.lmax is None:
            object.__setattr__(self, "lmax", int(math.ceil(self.kappa + 8 * self.kappa ** (1 / 3)
                                                           + 25)))
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if d.shape != (3,) or not n > 0:
            raise ParameterError("direction must be a nonzero 3-vector")
        object.__setattr__(self, "direction", tuple(d / n))

    @property
    def orders(self):
        return np.arange(self.lmax + 1)

    def field_coefficients(self):
        """``c_l`` with ``u_s(x) = sum_l c_l h_l(kappa |x|) P_l(cos angle)``."""
        l = self.orders
        k = self.kappa
        return -(2 * l + 1) * (1j**l) * spherical_jn(l, k) / _hankel(l, k)

    def density_coefficients(self):
        """Legendre coefficients of the exact density of the combined potential."""
        l = self.orders
        k, eta = self.kappa, self.eta
        jl = spherical_jn(l, k)
        djl = spherical_jn(l, k, derivative=True)
        return self.field_coefficients() / (1j * k * (k * djl - 1j * eta * jl))

    def _angle(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=-1)
        return r, (x @ np.asarray(self.direction)) / np.where(r > 0, r, 1.0)

    def scattered_field(self, x):
        """Scattered field at exterior points ``x`` (``|x| >= 1``)."""
        r, cos = self._angle(x)
        if np.any(r < 1.0 - 1e-12):
            raise DomainError("Mie field requested inside the sphere")
        c = self.field_coefficients()
        out = np.zeros(r.shape, dtype=complex)
        for l in self.orders:
            out += c[l] * _hankel(l, self.kappa * r) * eval_legendre(l, cos)
        return out

    def density(self, points):
        """Exact density at points of the unit sphere."""
        r, cos = self._angle(points)
        if np.any(np.abs(r - 1.0) > 1e-8):
            raise DomainError("density requested off the unit sphere")
        c = self.density_coefficients()
        return sum(c[l] * eval_legendre(l, cos) for l in self.orders)


def mie_scattered_field(kappa, x, direction=(0.0, 0.0, 1.0), lmax=None):
    """Shorthand for ``MieSeries(kappa, lmax=lmax, direction=direction).scattered_field(x)``."""
    return MieSeries(kappa, lmax=lmax, direction=direction).scattered_field(x)


def _cubature(f, a, b, rtol, atol):
    res = scipy.integrate.cubature(lambda x: np.stack([f(x).real, f(x).imag], -1), a, b,
                                   rtol=rtol, atol=atol, max_subdivisions=20000)
    if res.status != "converged":
        raise OracleError("adaptive cubature did not converge (error %.2e)" % np.max(res.error))
    return complex(res.estimate[0], res.estimate[1]), float(np.max(res.error))


def adaptive_integral_2d(f, lower, upper, rtol=1e-12, atol=1e-14):
    """``int f(u) du`` over a rectangle; ``f`` maps ``(n, 2)`` points to ``n`` values.

    Returns ``(value, error_estimate)``.
    """
    return _cubature(f, np.asarray(lower, float), np.asarray(upper, float), rtol, atol)


def adaptive_integral_polar(f, support, rtol=1e-12, atol=1e-14):
    """``int_{-R}^{R} int_0^{2 pi} f(rho, theta) dtheta drho`` with signed ``rho``.

    ``f`` receives ``(rho, theta)`` arrays.  No polar Jacobian is added: the
    integrands of the polar rule already carry their ``|rho|`` factor.
    Returns ``(value, error_estimate)``.
    """
    if not support > 0:
        raise ParameterError("support must be positive")

    def g(x):
        return f(x[:, 0], x[:, 1])

    return _cubature(g, np.array([-support, 0.0]), np.array([support, 2.0 * math.pi]), rtol, atol)


def polar_mode_integrals(N, radial, breakpoints, cos2_amplitude, center, nodes=1500):
    """Exact ``int int chi(rho, theta) e_m(center + rho e(theta)) drho dtheta`` for all ``m``.

    ``chi(rho, theta) = radial(|rho|) (1 + cos2_amplitude cos 2 theta)`` with
    ``radial`` smooth on each interval between consecutive ``breakpoints``
    (the last one bounds the support).  The angular integral is done in
    closed form with Bessel functions,

        int_0^2pi (1 + a cos 2t) exp(i x cos(t - phi)) dt = 2 pi (J0(x) - a J2(x) cos 2 phi),

    and the radial one by Gauss-Legendre quadrature on each piece.

    Returns an ``N x N`` array in :func:`nystrom3d.trig.frequencies` order.
    """
    k = trig.frequencies(N)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    freq = 2.0 * np.pi * np.hypot(m1, m2)
    angle = np.arctan2(m2, m1)
    levels, inverse = np.unique(freq.ravel(), return_inverse=True)
    x, w = np.polynomial.legendre.leggauss(nodes)
    j0 = np.zeros(levels.shape)
    j2 = np.zeros(levels.shape)
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        wt = 0.5 * (b - a) * w * radial(t)
        arg = np.outer(levels, t)
        j0 += jv(0, arg) @ wt
        j2 += jv(2, arg) @ wt
    j0 = j0[inverse].reshape(freq.shape)
    j2 = j2[inverse].reshape(freq.shape)
    # rho < 0 folds onto theta + pi, doubling the even angular terms
    val = 2.0 * 2.0 * np.pi * (j0 - cos2_amplitude * j2 * np.cos(2.0 * angle))
    c = np.asarray(center, dtype=float)
    return val * np.exp(2j * np.pi * (m1 * c[0] + m2 * c[1]))


def brute_force_apply(operator, phi):
    """Apply the discrete operator with explicit loops over targets, angles and lines.

    Independent of the vectorised assembly: it uses the full turn of angles
    with weight ``h k c(theta) / 2``, evaluates interpolants pointwise, and
    computes ``(r - r') . nu'`` directly from points.  Intended for tiny ``N``.
    """
    op = operator
    if op.variant is not None:
        raise ParameterError("brute force covers the exact line interpolation only")
    atlas, split, rule, N = op.atlas, op.split, op.rule, op.N
    h, k = rule.h, rule.k
    phi = np.asarray(phi, dtype=complex)
    dens = op.density(phi)
    polys = [trig.interpolate_QN(op.chart_grid_values(j, dens.values[j])) for j in range(atlas.J)]
    out = 0.5 * phi.copy()
    for i in range(atlas.J):
        gi = op.grids[i]
        for l in range(gi.size):
            row = op.offsets[i] + l
            r = gi.points[l]
            acc = 0.0 + 0.0j
            for m in range(op.n):
                acc += kernel_reg(split, r, op.points[m], op.normals[m]) * op.weights[m] * phi[m]
            for j in range(atlas.J):
                if (i, j) not in atlas.overlaps:
                    continue
                if atlas.distance_to_support(j, r[None])[0] >= atlas.eps1 * split.delta + 1e-6:
                    continue
                chart = atlas.charts[j]
                z = transition_map(atlas, i, j, gi.u[l:l + 1])[0]
                for p in range(rule.Theta):
                    th = p * k
                    e = np.array([math.cos(th), math.sin(th)])
                    for q in range(N):
                        if _is_vertical(th):
                            rho = (q * h - z[0]) / e[0]
                        else:
                            rho = (q * h - z[1]) / e[1]
                        node = z + rho * e
                        if not chart.in_domain(node[None])[0]:
                            continue
                        if rho == 0.0:
                            val = _polar_limit(chart, atlas, z[None], e[None], split.params)[0]
                        else:
                            rp, nup, jac = chart.evaluate(node[None])
                            if np.linalg.norm(r - rp[0]) >= atlas.eps1 * split.delta:
                                continue
                            val = abs(rho) * kernel_sing(split, r, rp[0], nup[0]) * jac[0]
                        xi = trig.eval_point(polys[j], node[None])[0]
                        acc += 0.5 * h * k * float(c_weight(th)) * val * xi
            out[row] += acc
    return out



def brute_force_operator(params, atlas, delta, N, phi, rule=None):
    """Loop-based operator application returning a :class:`DiscreteDensity` (``N <= 16``)."""
    from .quadrature import make_polar_rule
    from .solver import DiscreteDensity, NystromOperator

    if N > 16:
        raise ParameterError("the brute-force operator is limited to N <= 16")
    op = NystromOperator(params, atlas, N, delta, rule or make_polar_rule(N), threads=1)
    flat = phi.flat() if isinstance(phi, DiscreteDensity) else np.asarray(phi, dtype=complex)
    return op.density(brute_force_apply(op, flat))
