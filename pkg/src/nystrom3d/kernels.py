"""Helmholtz kernels of the combined-field equation and their splittings.

The combined kernel is ``K(r, r') = dPhi/dnu(r') - i eta Phi(r, r')`` with
``Phi(r, r') = exp(i kappa |r - r'|) / (4 pi |r - r'|)``.  It is written as
``K0 + K1`` where ``K0`` is smooth (analytic across the diagonal) and ``K1``
carries the ``1/|r - r'|`` singularity, and then further as
``K_reg = K0 + (1 - eta_delta) K1`` plus ``K_sing = eta_delta K1``.

Every function takes the "dot factor" ``(r - r') . nu'`` either explicitly or
computes it from the points.  For points on an atlas surface the solver passes
the cancellation-free value from :meth:`Atlas.normal_offset`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, SingularityError
from .geometry import CutoffFamily, omega_tilde

__all__ = [
    "ScatteringParams",
    "KernelSplit",
    "phi_kappa",
    "kernel_K",
    "kernel_K0",
    "kernel_K1",
    "kernel_reg",
    "kernel_sing",
    "polar_sing_eval",
    "polar_kernel_values",
    "k0_values",
    "k1_values",
]

FOUR_PI = 4.0 * math.pi
#: Below ``kappa * s`` of this size ``K0`` is evaluated from its Taylor series.
SERIES_THRESHOLD = 1e-4


@dataclass(frozen=True)
class ScatteringParams:
    """Wavenumber ``kappa`` and coupling ``eta`` (default ``max(1, kappa)``)."""

    kappa: float
    eta: float = None

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ParameterError("kappa must be positive")
        if self.eta is None:
            object.__setattr__(self, "eta", max(1.0, float(self.kappa)))
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ParameterError("eta must be positive")


@dataclass(frozen=True)
class KernelSplit:
    """Kernel parameters together with the cut-off family and current ``delta``."""

    params: ScatteringParams
    cutoff: CutoffFamily
    delta: float = field(default=None)

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(self, "delta", self.cutoff.delta0)
        if not 0.0 < self.delta <= self.cutoff.delta0 * (1 + 1e-12):
            raise ParameterError("delta must lie in (0, delta0]")

    def eta_delta(self, s):
        return self.cutoff.profile(s, self.delta)


def _sinc_series(x2):
    # sin(x)/x
    return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (
        1.0 - x2 / 110.0 * (1.0 - x2 / 156.0)))))


def _tcoef_series(x2):
    # (cos x - sin(x)/x) / x^2 = sum_{n>=1} (-1)^n 2n x^(2n-2) / (2n+1)!
    out = np.zeros_like(x2)
    term = np.ones_like(x2)
    fact = 1.0
    for n in range(1, 7):
        fact *= (2 * n) * (2 * n + 1)
        out = out + (-1) ** n * 2 * n * term / fact
        term = term * x2
    return out


def k0_values(s, dot, kappa, eta):
    """``K0`` from the distance ``s = |r - r'|`` and ``dot = (r - r') . nu'``.

    Finite at ``s = 0`` (value ``eta kappa / (4 pi)``).
    """
    s = np.asarray(s, dtype=float)
    dot = np.asarray(dot, dtype=float)
    x = kappa * s
    small = x < SERIES_THRESHOLD
    xs = np.where(small, 1.0, x)
    x2 = np.where(small, x * x, 0.0)
    sinc = np.where(small, _sinc_series(x2), np.sin(xs) / xs)
    tco = np.where(small, _tcoef_series(x2), (np.cos(xs) - np.sin(xs) / xs) / (xs * xs))
    return (eta * kappa * sinc - 1j * kappa**3 * tco * dot) / FOUR_PI


def k1_values(s, dot, kappa, eta):
    """``K1`` from ``s`` and ``dot`` (singular like ``1/s``; requires ``s > 0``)."""
    s = np.asarray(s, dtype=float)
    x = kappa * s
    c, sn = np.cos(x), np.sin(x)
    return (-1j * eta * c + (x * sn + c) * (dot / (s * s))) / (FOUR_PI * s)


def _geometry(r, rp, nup):
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    nup = np.asarray(nup, dtype=float)
    diff = r - rp
    s = np.linalg.norm(diff, axis=-1)
    dot = np.sum(diff * nup, axis=-1)
    return s, dot


def _require_distinct(s):
    if np.any(s == 0.0):
        raise SingularityError("kernel evaluated at coincident points")


def phi_kappa(r, rp, kappa):
    """Fundamental solution ``exp(i kappa |r - r'|) / (4 pi |r - r'|)``."""
    s = np.linalg.norm(np.asarray(r, float) - np.asarray(rp, float), axis=-1)
    _require_distinct(s)
    return np.exp(1j * kappa * s) / (FOUR_PI * s)


def kernel_K(r, rp, nup, params):
    """Combined kernel ``dPhi/dnu(r') - i eta Phi(r, r')``."""
    s, dot = _geometry(r, rp, nup)
    _require_distinct(s)
    x = params.kappa * s
    # grad_{r'} Phi . nu' = exp(i x) (1 - i x) (r - r').nu' / (4 pi s^3)
    dphi = np.exp(1j * x) * (1.0 - 1j * x) * dot / (FOUR_PI * s**3)
    return dphi - 1j * params.eta * np.exp(1j * x) / (FOUR_PI * s)


def kernel_K0(r, rp, nup, params):
    """Smooth part ``K0``; defined on the diagonal through its series."""
    s, dot = _geometry(r, rp, nup)
    return k0_values(s, dot, params.kappa, params.eta)


def kernel_K1(r, rp, nup, params):
    """Weakly singular part ``K1 = K - K0``."""
    s, dot = _geometry(r, rp, nup)
    _require_distinct(s)
    return k1_values(s, dot, params.kappa, params.eta)


def kernel_reg(split, r, rp, nup):
    """``K_reg = K0 + (1 - eta_delta) K1``; equals ``K0`` on the cut-off plateau."""
    s, dot = _geometry(r, rp, nup)
    p = split.params
    out = k0_values(s, dot, p.kappa, p.eta)
    weight = 1.0 - split.eta_delta(s)
    live = weight > 0.0
    if np.any(live & (s == 0.0)):
        raise SingularityError("kernel evaluated at coincident points")
    safe = np.where(live, s, 1.0)
    return out + np.where(live, weight * k1_values(safe, dot, p.kappa, p.eta), 0.0)


def kernel_sing(split, r, rp, nup):
    """``K_sing = eta_delta K1``; exactly zero for ``|r - r'| >= eps1 delta``."""
    s, dot = _geometry(r, rp, nup)
    p = split.params
    weight = split.eta_delta(s)
    live = weight > 0.0
    if np.any(live & (s == 0.0)):
        raise SingularityError("kernel evaluated at coincident points")
    safe = np.where(live, s, 1.0)
    return np.where(live, weight * k1_values(safe, dot, p.kappa, p.eta), 0.0)


def polar_kernel_values(split, atlas, j, center, rho, direction):
    """``|rho| K_sing(r^j(z), r^j(z + rho e)) a^j(z + rho e)`` along polar rays.

    Parameters
    ----------
    center : ndarray, shape (..., 2)
        Polar centres ``z`` in the parameter square of chart ``j``.
    rho : ndarray
        Signed radii, broadcastable against ``center[..., 0]``.
    direction : ndarray, shape (..., 2)
        Unit vectors ``e(theta)``, broadcastable against ``center``.

    Returns
    -------
    ndarray
        Complex values; ``rho = 0`` is filled with the analytic limit.  Nodes
        outside ``D^j`` are set to zero (the density vanishes there).
    """
    chart = atlas.charts[j]
    p = split.params
    center = np.asarray(center, dtype=float)
    rho = np.asarray(rho, dtype=float)
    direction = np.asarray(direction, dtype=float)
    du = rho[..., None] * direction
    node = center + du
    chord = -chart.secant(center, du)  # r^j(z) - r^j(node)
    rp, _, jac = chart.evaluate(node)
    s = np.linalg.norm(chord, axis=-1)
    dot = atlas.normal_offset(chord, rp)
    weight = split.eta_delta(s)
    live = (weight > 0.0) & (s > 0.0) & chart.in_domain(node)
    safe = np.where(live, s, 1.0)
    arho = np.abs(rho)
    vals = np.where(live, arho * weight * k1_values(safe, dot, p.kappa, p.eta) * jac, 0.0)
    hit = rho == 0.0
    if np.any(hit):
        zc = np.broadcast_to(center, node.shape)[hit]
        ec = np.broadcast_to(direction, node.shape)[hit]
        vals[hit] = _polar_limit(chart, atlas, zc, ec, p)
    return vals


def _polar_limit(chart, atlas, z, e, params):
    """Limit of ``|rho| K1 a^j`` as ``rho -> 0`` along ``e`` (cut-off equals 1 there)."""
    r, _, jac = chart.evaluate(z)
    t1, t2 = chart.tangents(z)
    Je = t1 * e[..., 0:1] + t2 * e[..., 1:2]
    speed = np.linalg.norm(Je, axis=-1)
    ratio = atlas.normal_offset_ratio_limit(r, Je)
    return (-1j * params.eta + ratio) * jac / (FOUR_PI * speed)


def polar_sing_eval(split, atlas, i, j, u, rho, theta):
    """Smooth polar integrand of the singular operator for targets of chart ``i``.

    Returns ``(1/2) omega^i(r^i(u)) |rho| K^{ij}_sing(u, z + rho e(theta))
    omega~^j_delta(z + rho e(theta))`` with ``z = r^{ji}(u)``; the chart
    Jacobian ``a^j`` is part of ``K^{ij}_sing``.

    Raises
    ------
    DomainError
        If ``r^i(u)`` is farther than ``4 eps1 delta0`` from ``supp omega^j``
        or ``u`` lies outside ``D^i``.
    """
    from .geometry import transition_map

    u = np.atleast_2d(np.asarray(u, dtype=float))
    ci = atlas.charts[i]
    if not np.all(ci.in_domain(u)):
        raise DomainError("target outside D^%d" % i)
    pts = ci.map(u)
    if np.any(atlas.distance_to_support(j, pts) > 4.0 * atlas.eps1 * atlas.delta0):
        raise DomainError("target outside Omega^{%d%d}_{2 delta0}" % (i, j))
    z = transition_map(atlas, i, j, u)
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    e = np.stack(np.broadcast_arrays(np.cos(theta), np.sin(theta)), -1)
    shape = np.broadcast_shapes(u.shape[:-1], rho.shape, theta.shape)
    zb = np.broadcast_to(z, shape + (2,))
    eb = np.broadcast_to(e, shape + (2,))
    rb = np.broadcast_to(rho, shape)
    vals = polar_kernel_values(split, atlas, j, zb, rb, eb)
    wi = np.broadcast_to(atlas.omega(i, u), shape)
    wt = omega_tilde(atlas, j, zb + rb[..., None] * eb, split.delta)
    return 0.5 * wi * vals * wt
