"""Bivariate trigonometric polynomials on the unit torus and Hermite interpolation.

Coefficients are stored in a centred ``N x N`` array: entry ``[a, b]`` holds
``xi_hat(a - N//2, b - N//2)``, so the frequency set is
``Z*_N = {-N//2 <= m < N - N//2}`` in each direction (for even ``N`` the mode
``-N/2`` is kept and ``+N/2`` is not).  The forward transform is

    xi_hat(m) = N^-2 sum_n values(n) exp(-2 pi i m . n / N),

so that ``xi(u) = sum_m xi_hat(m) exp(2 pi i m . u)`` interpolates the values.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "TrigPoly",
    "HermiteInterpolant",
    "frequencies",
    "interpolate_QN",
    "project_PN",
    "eval_point",
    "eval_radial_line",
    "sobolev_norm",
    "hermite_interpolate",
    "hermite_eval",
    "hermite_basis",
    "derivatives_on_fine_grid",
    "line_derivative_matrices",
    "dirichlet_weights",
]

TWO_PI = 2.0 * math.pi


def frequencies(N):
    """Integer frequencies of ``Z*_N`` in storage order."""
    return np.arange(N) - N // 2


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Element of ``T_N`` stored by its centred Fourier coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ParameterError("coefficients must form a square array")
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self):
        return self.coeffs.shape[0]

    @classmethod
    def mode(cls, N, m1, m2):
        """Single exponential ``e_(m1, m2)`` as an element of ``T_N``."""
        c = np.zeros((N, N), dtype=complex)
        c[m1 + N // 2, m2 + N // 2] = 1.0
        return cls(c)

    def grid_values(self):
        """Values at ``x_n = n / N``, shape ``(N, N)``."""
        N = self.N
        return np.fft.ifft2(np.fft.ifftshift(self.coeffs)) * N * N

    def __call__(self, u):
        return eval_point(self, u)


def interpolate_QN(values):
    """Trigonometric interpolant ``Q_N`` of grid values given as an ``N x N`` array."""
    v = np.asarray(values, dtype=complex)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ParameterError("grid values must form a square array")
    N = v.shape[0]
    return TrigPoly(np.fft.fftshift(np.fft.fft2(v)) / (N * N))


def project_PN(poly, N_target):
    """Fourier truncation ``P_N``: keep only the modes in ``Z*_{N_target}``."""
    c = poly.coeffs if isinstance(poly, TrigPoly) else np.asarray(poly, dtype=complex)
    N = c.shape[0]
    if N_target > N:
        raise ParameterError("target order exceeds the source order")
    if N_target < 1:
        raise ParameterError("target order must be positive")
    lo = N // 2 - N_target // 2
    sl = slice(lo, lo + N_target)
    return TrigPoly(c[sl, sl].copy())


def _exp_table(k, x):
    return np.exp(TWO_PI * 1j * np.multiply.outer(x, k))


def eval_point(poly, u):
    """``sum_m xi_hat(m) exp(2 pi i m . u)`` at points ``u`` of shape ``(..., 2)``."""
    u = np.asarray(u, dtype=float)
    k = frequencies(poly.N)
    flat = u.reshape(-1, 2)
    E1 = _exp_table(k, flat[:, 0])
    E2 = _exp_table(k, flat[:, 1])
    out = np.einsum("pa,ab,pb->p", E1, poly.coeffs, E2)
    return out.reshape(u.shape[:-1])


def _axis(line):
    if line in ("vertical", 0, "u1"):
        return 0
    if line in ("horizontal", 1, "u2"):
        return 1
    raise ParameterError("line must be 'vertical' or 'horizontal'")


def line_coefficients(poly, line, q):
    """Univariate coefficients of the restriction of ``poly`` to a grid line.

    ``vertical`` fixes ``u1 = q h`` (the restriction varies in ``u2``);
    ``horizontal`` fixes ``u2 = q h``.
    """
    N = poly.N
    if not 0 <= q < N:
        raise ParameterError("line index out of range")
    phase = np.exp(TWO_PI * 1j * frequencies(N) * q / N)
    if _axis(line) == 0:
        return phase @ poly.coeffs
    return poly.coeffs @ phase


def eval_radial_line(poly, line, q, offsets):
    """Values of ``poly`` on grid line ``q`` at the given 1D coordinates."""
    c = line_coefficients(poly, line, q)
    t = np.asarray(offsets, dtype=float)
    return _exp_table(frequencies(poly.N), t) @ c


def sobolev_norm(poly, s):
    """Periodic Sobolev norm ``||xi||_s``."""
    N = poly.N
    k = frequencies(N)
    m2 = k[:, None] ** 2 + k[None, :] ** 2
    w = np.where(m2 == 0, 1.0, np.power(np.where(m2 == 0, 1, m2), float(s)))
    return float(np.sqrt(np.sum(w * np.abs(poly.coeffs) ** 2)))


def dirichlet_weights(N, t):
    """Matrix ``W[n, m] = N^-1 sum_{k in Z*_N} exp(2 pi i k (t_n - m/N))``.

    ``W @ g`` evaluates the 1D interpolant of samples ``g`` at ``t``.
    """
    t = np.asarray(t, dtype=float)
    k = frequencies(N)
    E = np.exp(-TWO_PI * 1j * np.outer(k, np.arange(N)) / N) / N
    return _exp_table(k, t) @ E


# ---------------------------------------------------------------------------
# spectral derivatives


def derivatives_on_fine_grid(poly, direction, orders, m):
    """Spectral derivatives along grid lines sampled on the refined mesh ``h/m``.

    Parameters
    ----------
    poly : TrigPoly
    direction : {'u1', 'u2'} or {0, 1}
        Differentiation (and refinement) direction.
    orders : int or sequence of int
        Derivative orders ``r``; an int ``d`` means ``0..d``.
    m : int
        Refinement factor, ``m >= 1``.

    Returns
    -------
    ndarray
        Shape ``(len(orders), N m, N)`` for ``u1`` (lines of constant ``u2``
        sampled in ``u1``) or ``(len(orders), N, N m)`` for ``u2``.
    """
    if m < 1:
        raise ParameterError("refinement m must be >= 1")
    if isinstance(orders, (int, np.integer)):
        orders = range(orders + 1)
    axis = _axis(direction)
    N = poly.N
    M = N * m
    k = frequencies(N)
    slots = np.mod(k, M)
    out = []
    for r in orders:
        factor = (TWO_PI * 1j * k) ** r
        c = poly.coeffs * (factor[:, None] if axis == 0 else factor[None, :])
        shape = (M, N) if axis == 0 else (N, M)
        padded = np.zeros(shape, dtype=complex)
        other = np.mod(k, N)
        if axis == 0:
            padded[np.ix_(slots, other)] = c
        else:
            padded[np.ix_(other, slots)] = c
        out.append(np.fft.ifft2(padded) * (M * N))
    return np.stack(out)


@functools.lru_cache(maxsize=32)
def line_derivative_matrices(N, m, d):
    """Matrices ``D_r`` (``N m x N``) mapping samples of a 1D trigonometric
    interpolant of order ``N`` to its ``r``-th derivative on the mesh ``h/m``.

    Returned array has shape ``(d + 1, N m, N)`` and is read-only.
    """
    k = frequencies(N)
    M = N * m
    y = np.arange(M) / M
    E = np.exp(-TWO_PI * 1j * np.outer(k, np.arange(N)) / N) / N
    V = _exp_table(k, y)
    mats = np.stack([(V * (TWO_PI * 1j * k) ** r) @ E for r in range(d + 1)])
    mats.setflags(write=False)
    return mats


# ---------------------------------------------------------------------------
# piecewise Hermite interpolation


@functools.lru_cache(maxsize=16)
def _hermite_coefficients(d):
    n = 2 * d + 2
    M = np.zeros((n, n))
    for side, x in enumerate((0.0, 1.0)):
        for r in range(d + 1):
            row = side * (d + 1) + r
            for p in range(r, n):
                M[row, p] = math.factorial(p) / math.factorial(p - r) * x ** (p - r)
    C = np.linalg.inv(M)
    C.setflags(write=False)
    return C


def hermite_basis(d, tau):
    """Basis values ``H[..., side, r]`` on the reference cell ``[0, 1]``.

    The local interpolant is ``sum_{side, r} H[side, r] k^r f^(r)(end_side)``.
    """
    tau = np.asarray(tau, dtype=float)
    C = _hermite_coefficients(d)
    powers = tau[..., None] ** np.arange(2 * d + 2)
    return (powers @ C).reshape(tau.shape + (2, d + 1))


@dataclass(frozen=True, eq=False)
class HermiteInterpolant:
    """Piecewise Hermite interpolant of degree ``2d + 1`` on the mesh ``p k``."""

    k: float
    d: int
    data: np.ndarray
    periodic: bool = False

    @property
    def breakpoints(self):
        return np.arange(self.data.shape[0]) * self.k


def hermite_interpolate(data, k, d, periodic=False):
    """Build the piecewise Hermite interpolant from derivative data.

    Parameters
    ----------
    data : array_like, shape (P + 1, d + 1) or (P, d + 1) if periodic
        ``data[p, r]`` is the ``r``-th derivative at ``p k``.
    k : float
        Mesh size; ``1 / k`` must be an integer.
    d : int
        Number of matched derivatives (degree ``2d + 1``).
    """
    data = np.asarray(data)
    if d < 0:
        raise ParameterError("d must be nonnegative")
    if data.ndim != 2 or data.shape[1] < d + 1:
        raise ParameterError("derivative data of orders 0..d required at every breakpoint")
    P = round(1.0 / k)
    if abs(P * k - 1.0) > 1e-12:
        raise ParameterError("1/k must be an integer")
    expected = P if periodic else P + 1
    if data.shape[0] != expected:
        raise ParameterError("expected %d breakpoints" % expected)
    return HermiteInterpolant(float(k), int(d), data[:, : d + 1].copy(), bool(periodic))


def hermite_eval(interp, x):
    """Evaluate a :class:`HermiteInterpolant` at ``x`` (in ``[0, 1]``; wrapped if periodic)."""
    x = np.asarray(x, dtype=float)
    P = interp.data.shape[0] if interp.periodic else interp.data.shape[0] - 1
    y = x / interp.k
    if interp.periodic:
        y = np.mod(y, P)
    cell = np.clip(np.floor(y).astype(int), 0, P - 1)
    tau = y - cell
    right = np.mod(cell + 1, P) if interp.periodic else cell + 1
    H = hermite_basis(interp.d, tau)
    scale = interp.k ** np.arange(interp.d + 1)
    left_vals = interp.data[cell] * scale
    right_vals = interp.data[right] * scale
    out = np.sum(H[..., 0, :] * left_vals, -1) + np.sum(H[..., 1, :] * right_vals, -1)
    # breakpoints return the supplied samples bit for bit
    out = np.where(tau == 0.0, interp.data[cell, 0], out)
    return np.where(tau == 1.0, interp.data[right, 0], out)
