"""Discrete Nystrom system: assembly, matrix-free application, solution and post-processing.

Unknowns are ordered chart-major and, within a chart, in the row-major order
of the active grid nodes ``Omega^j_h`` (see :func:`nystrom3d.geometry.grid`).
The operator is

    (B phi)_l = phi_l / 2 + h^2 sum_m K_reg(r_l, r_m) a_m omega_m phi_m
                + sum_j [L^{ij} Q_N(omega^j phi^j)](x^i_l),

where the regular part couples all unknowns of all charts and the polar rule
``L^{ij}`` is precomputed as dense blocks acting on the unknowns of chart
``j``.  The regular kernel matrix is cached when it fits in memory and is
otherwise recomputed block by block on each application.
"""

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import trig
from .errors import DomainError, ParameterError, ProximityError, ResourceError, SolverError
from .geometry import grid
from .kernels import FOUR_PI, KernelSplit
from .quadrature import make_polar_rule, regular_kernel_matrix, singular_row_weights

__all__ = [
    "DiscreteDensity",
    "RHS",
    "NystromOperator",
    "NystromSolution",
    "worker_count",
    "delta_schedule",
    "build_operator",
    "plane_wave",
    "plane_wave_rhs",
    "apply_operator",
    "assemble_dense",
    "solve",
    "reconstruct",
    "assemble_psi",
    "evaluate_potential",
]

log = logging.getLogger(__name__)

#: Largest regular kernel matrix kept in memory when ``cache_regular='auto'``.
REGULAR_CACHE_BYTES = 1 << 30
#: Default cap on the number of unknowns for dense materialisation.
DENSE_CAP = 5000
_ROW_BLOCK = 256


def worker_count():
    """Worker threads allowed by ``NYSTROM_THREADS`` (default: CPU count)."""
    env = os.environ.get("NYSTROM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ParameterError("NYSTROM_THREADS must be an integer") from exc
        if n < 1:
            raise ParameterError("NYSTROM_THREADS must be positive")
        return n
    return max(1, os.cpu_count() or 1)


def delta_schedule(atlas, N, beta=1.0 / 3.0, coeff=1.0):
    """Cut-off radius ``min(delta0, coeff * h^beta)``."""
    if not 0.0 < beta < 1.0:
        raise ParameterError("beta must lie in (0, 1)")
    return min(atlas.delta0, coeff * (1.0 / N) ** beta)


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    """Per-chart unknowns ``phi^j_l`` on ``Omega^j_h``."""

    N: int
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(np.asarray(v, dtype=complex) for v in self.values))
        for v in self.values:
            if v.ndim != 1:
                raise ParameterError("chart densities must be one-dimensional")
            if not np.all(np.isfinite(v)):
                raise ParameterError("chart densities must be finite")

    @property
    def h(self):
        return 1.0 / self.N

    def flat(self):
        return np.concatenate(self.values)

    @classmethod
    def from_flat(cls, N, sizes, flat):
        flat = np.asarray(flat, dtype=complex)
        if flat.shape != (sum(sizes),):
            raise ParameterError("flat vector does not match the grid sizes")
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        return cls(N, tuple(parts))


@dataclass(frozen=True, eq=False)
class RHS:
    """Right-hand side ``-U^inc(r^i(x^i_l))`` and the incident direction."""

    density: DiscreteDensity
    direction: np.ndarray


def plane_wave(kappa, direction, points):
    """Incident plane wave ``exp(i kappa d . r)``."""
    d = np.asarray(direction, dtype=float)
    return np.exp(1j * kappa * (np.asarray(points, dtype=float) @ d))


def _unit(direction):
    d = np.asarray(direction, dtype=float)
    n = np.linalg.norm(d)
    if d.shape != (3,) or not n > 0:
        raise ParameterError("incident direction must be a nonzero 3-vector")
    return d / n


class NystromOperator:
    """Assembled discretisation of the combined-field operator on one atlas.

    Parameters
    ----------
    params : ScatteringParams
    atlas : Atlas
    N : int
        Grid order, shared by all charts.
    delta : float
    rule : PolarRule, optional
        Defaults to :func:`make_polar_rule` with ``alpha = 0.5``.
    variant : None or tuple ``(m, d)``
        ``None`` for the base scheme, ``(m, d)`` for the Hermite variant.
    cache_regular : {'auto', True, False}
    threads : int, optional
        Worker threads for the precomputation (default :func:`worker_count`).
    """

    def __init__(self, params, atlas, N, delta, rule=None, variant=None, cache_regular="auto",
                 threads=None):
        if rule is None:
            rule = make_polar_rule(N)
        if rule.N != N:
            raise ParameterError("polar rule built for a different N")
        self.params = params
        self.atlas = atlas
        self.N = int(N)
        self.delta = float(delta)
        self.rule = rule
        self.variant = None if variant is None else (int(variant[0]), int(variant[1]))
        self.split = KernelSplit(params, atlas.cutoff, self.delta)
        self.threads = threads or worker_count()
        self.grids = [grid(atlas, j, self.N) for j in range(atlas.J)]
        self.sizes = [g.size for g in self.grids]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n = int(self.offsets[-1])
        self.points = np.concatenate([g.points for g in self.grids])
        self.normals = np.concatenate([g.normals for g in self.grids])
        self.omega = np.concatenate([g.omega for g in self.grids])
        self.jac = np.concatenate([g.jac for g in self.grids])
        self.weights = self.jac * self.omega / self.N**2
        self._lock = threading.Lock()
        self._regular = None
        self._singular = None
        nbytes = 16 * self.n * self.n
        self.cache_regular = (nbytes <= REGULAR_CACHE_BYTES) if cache_regular == "auto" else bool(
            cache_regular)
        self.setup_seconds = 0.0

    # -- assembly ---------------------------------------------------------

    def _map(self, fn, items):
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    def _regular_rows(self, start, stop):
        return regular_kernel_matrix(self.split, self.atlas, self.points[start:stop], self.points,
                                     self.weights)

    def regular_matrix(self):
        """Full regular-part matrix (computed once when caching is enabled)."""
        with self._lock:
            if self._regular is not None:
                return self._regular
            blocks = [(s, min(s + _ROW_BLOCK, self.n)) for s in range(0, self.n, _ROW_BLOCK)]
            mat = np.vstack(self._map(lambda b: self._regular_rows(*b), blocks))
            if self.cache_regular:
                self._regular = mat
            return mat

    def _singular_pair(self, pair):
        i, j = pair
        gi, gj = self.grids[i], self.grids[j]
        blocks = []
        for idx, W in singular_row_weights(self.split, self.atlas, i, j, self.rule, gi.u,
                                           self.variant):
            B = W.reshape(W.shape[0], -1)[:, gj.flat] * gj.omega[None, :]
            blocks.append((idx, B))
        if not blocks:
            return None
        rows = np.concatenate([b[0] for b in blocks])
        mat = np.vstack([b[1] for b in blocks])
        return i, j, rows, mat

    def singular_blocks(self):
        """List of ``(i, j, rows, block)``: ``block @ phi^j`` adds to ``phi^i[rows]``."""
        with self._lock:
            if self._singular is None:
                t0 = time.perf_counter()
                pairs = sorted(self.atlas.overlaps)
                out = self._map(self._singular_pair, pairs)
                self._singular = [b for b in out if b is not None]
                self.setup_seconds += time.perf_counter() - t0
                log.info("singular blocks for N=%d assembled in %.2fs", self.N,
                         time.perf_counter() - t0)
            return self._singular

    def prepare(self):
        """Precompute every cached piece of the operator."""
        t0 = time.perf_counter()
        self.singular_blocks()
        if self.cache_regular:
            self.regular_matrix()
        self.setup_seconds = time.perf_counter() - t0
        return self

    # -- application ------------------------------------------------------

    def chart_slice(self, j):
        return slice(self.offsets[j], self.offsets[j + 1])

    def apply_regular_flat(self, phi):
        if self.cache_regular:
            return self.regular_matrix() @ phi
        out = np.empty(self.n, dtype=complex)
        for s in range(0, self.n, _ROW_BLOCK):
            e = min(s + _ROW_BLOCK, self.n)
            out[s:e] = self._regular_rows(s, e) @ phi
        return out

    def apply_singular_flat(self, phi):
        out = np.zeros(self.n, dtype=complex)
        for i, j, rows, B in self.singular_blocks():
            out[self.offsets[i] + rows] += B @ phi[self.chart_slice(j)]
        return out

    def matvec(self, phi, include_kernels=True):
        phi = np.asarray(phi, dtype=complex).reshape(-1)
        if phi.shape != (self.n,):
            raise ParameterError("density has %d entries, expected %d" % (phi.size, self.n))
        out = 0.5 * phi
        if include_kernels:
            out = out + self.apply_regular_flat(phi) + self.apply_singular_flat(phi)
        return out

    def as_linear_operator(self):
        return spla.LinearOperator((self.n, self.n), matvec=self.matvec, dtype=complex)

    def dense(self, cap=DENSE_CAP):
        """Explicit matrix of the operator."""
        if self.n > cap:
            raise ResourceError("%d unknowns exceed the dense cap %d" % (self.n, cap))
        A = 0.5 * np.eye(self.n, dtype=complex)
        A += self.regular_matrix()
        for i, j, rows, B in self.singular_blocks():
            sl = self.chart_slice(j)
            A[self.offsets[i] + rows, sl] += B
        return A

    # -- helpers ----------------------------------------------------------

    def density(self, flat):
        return DiscreteDensity.from_flat(self.N, self.sizes, flat)

    def check_density(self, phi):
        if not isinstance(phi, DiscreteDensity):
            return np.asarray(phi, dtype=complex).reshape(-1)
        if phi.N != self.N or [v.size for v in phi.values] != self.sizes:
            raise ParameterError("density grid does not match the operator grids")
        return phi.flat()

    def rhs(self, direction):
        d = _unit(direction)
        vals = -plane_wave(self.params.kappa, d, self.points)
        return RHS(self.density(vals), d)

    def chart_grid_values(self, j, phi_j):
        """``omega^j phi^j`` zero-extended to the full ``N x N`` grid."""
        g = self.grids[j]
        G = np.zeros(self.N * self.N, dtype=complex)
        G[g.flat] = g.omega * phi_j
        return G.reshape(self.N, self.N)

    def snapshot(self):
        return {
            "kappa": self.params.kappa,
            "eta": self.params.eta,
            "N": self.N,
            "delta": self.delta,
            "Theta": self.rule.Theta,
            "alpha": self.rule.alpha,
            "unknowns": self.n,
            "variant": "base" if self.variant is None else "hermite(m=%d,d=%d)" % self.variant,
        }


_OPERATORS = {}
_OPERATORS_LOCK = threading.Lock()


def build_operator(params, atlas, delta, rule, variant=None, **kwargs):
    """Cached :class:`NystromOperator` for the given parameters."""
    key = (params, id(atlas), float(delta), rule, None if variant is None else tuple(variant))
    with _OPERATORS_LOCK:
        op = _OPERATORS.get(key)
        if op is None or op.atlas is not atlas:
            op = NystromOperator(params, atlas, rule.N, delta, rule, variant, **kwargs)
            if len(_OPERATORS) >= 4:
                _OPERATORS.pop(next(iter(_OPERATORS)))
            _OPERATORS[key] = op
    return op


def plane_wave_rhs(params, atlas, delta, rule, direction=(0.0, 0.0, 1.0)):
    """:class:`RHS` for an incident plane wave."""
    return build_operator(params, atlas, delta, rule).rhs(direction)


def apply_operator(params, atlas, delta, rule, phi, variant=None, include_kernels=True):
    """Left-hand side of the Nystrom equations applied to ``phi``.

    ``include_kernels=False`` drops every integral term, leaving ``phi / 2``.
    """
    op = build_operator(params, atlas, delta, rule, variant)
    flat = op.check_density(phi)
    return op.density(op.matvec(flat, include_kernels))


def assemble_dense(params, atlas, delta, rule, variant=None, cap=DENSE_CAP):
    """Explicit matrix whose columns are the operator applied to unit vectors."""
    return build_operator(params, atlas, delta, rule, variant).dense(cap)


@dataclass(eq=False)
class NystromSolution:
    """Solved density with the operator it belongs to and solver diagnostics."""

    operator: NystromOperator
    density: DiscreteDensity
    direction: np.ndarray
    iterations: int
    residual: float
    residuals: list = field(default_factory=list)
    seconds: float = 0.0
    method: str = "gmres"

    @property
    def params(self):
        return self.operator.params

    def chart_polynomial(self, j):
        """``phi^j_h = Q_N(omega^j psi^j_h)`` as a trigonometric polynomial."""
        return trig.interpolate_QN(self.operator.chart_grid_values(j, self.density.values[j]))

    def snapshot(self):
        snap = self.operator.snapshot()
        snap.update(iterations=self.iterations, residual=self.residual, method=self.method)
        return snap


def solve(params, atlas, delta, rule, rhs, variant=None, method="gmres", tol=1e-12, restart=50,
          maxiter=None):
    """Solve the Nystrom system for the given right-hand side.

    Raises
    ------
    SolverError
        If GMRES stops before reaching ``tol`` (the residual history is attached).
    """
    op = build_operator(params, atlas, delta, rule, variant)
    b = op.check_density(rhs.density)
    t0 = time.perf_counter()
    op.prepare()
    bnorm = np.linalg.norm(b)
    history = []
    if bnorm == 0.0:
        x = np.zeros_like(b)
        iters, method_used = 0, method
    elif method == "dense":
        A = op.dense(cap=max(DENSE_CAP, op.n))
        x = scipy.linalg.solve(A, b)
        iters, method_used = 0, "dense"
    elif method == "gmres":
        if maxiter is None:
            maxiter = max(10, op.n // restart + 1)
        history_cb = history.append
        x, info = spla.gmres(op.as_linear_operator(), b, rtol=tol, atol=0.0, restart=restart,
                             maxiter=maxiter, callback=history_cb, callback_type="pr_norm")
        iters, method_used = len(history), "gmres"
        if info != 0:
            raise SolverError("GMRES did not converge (info=%d)" % info, history)
    else:
        raise ParameterError("unknown solver method %r" % method)
    residual = 0.0 if bnorm == 0.0 else float(np.linalg.norm(op.matvec(x) - b) / bnorm)
    if residual > 10.0 * tol:
        raise SolverError("final residual %.3e exceeds tolerance %.1e" % (residual, tol), history)
    seconds = time.perf_counter() - t0
    log.info("N=%d: %d unknowns, %d iterations, residual %.2e, %.1fs", op.N, op.n, iters, residual,
             seconds)
    return NystromSolution(op, op.density(x), np.asarray(rhs.direction, float), iters, residual,
                           [float(r) for r in history], seconds, method_used)


def _integral_terms(solution, i, u):
    """``sum_j`` (regular trapezoid + polar rule) applied to the solution at ``u`` in chart ``i``."""
    op = solution.operator
    u = np.atleast_2d(np.asarray(u, dtype=float))
    r = op.atlas.charts[i].map(u)
    phi = solution.density.flat()
    out = regular_kernel_matrix(op.split, op.atlas, r, op.points, op.weights) @ phi
    for j in range(op.atlas.J):
        values = op.chart_grid_values(j, solution.density.values[j])
        for idx, W in singular_row_weights(op.split, op.atlas, i, j, op.rule, u, op.variant):
            out[idx] += np.einsum("tab,ab->t", W, values)
    return out, r


def reconstruct(solution, i, u):
    """Continuous density ``psi^i_h(u)`` on chart ``i`` from the Nystrom formula."""
    op = solution.operator
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if not np.all(op.atlas.charts[i].in_domain(u)):
        raise DomainError("reconstruction point outside D^%d" % i)
    terms, r = _integral_terms(solution, i, u)
    uinc = plane_wave(op.params.kappa, solution.direction, r)
    return -2.0 * terms - 2.0 * uinc


def assemble_psi(solution, r, tol=1e-8):
    """Global density ``psi_h(r) = sum_j omega^j(r) psi^j_h((r^j)^-1(r))``."""
    op = solution.operator
    atlas = op.atlas
    r = np.atleast_2d(np.asarray(r, dtype=float))
    level = np.linalg.norm(r / atlas.semiaxes, axis=-1)
    if np.any(np.abs(level - 1.0) > tol):
        raise DomainError("point is not on the surface")
    w = atlas.pou(r)
    out = np.zeros(r.shape[0], dtype=complex)
    for j, chart in enumerate(atlas.charts):
        sel = np.flatnonzero(w[j] > 0.0)
        if sel.size == 0:
            continue
        guess, _ = chart.approximate_inverse(r[sel])
        u = chart.newton_inverse(r[sel], guess)
        out[sel] += w[j, sel] * reconstruct(solution, j, u)
    return out


def combined_kernel_at(x, points, normals, params):
    """``dPhi/dnu' - i eta Phi`` between field points ``x`` and surface nodes."""
    diff = x[:, None, :] - points[None, :, :]
    s = np.linalg.norm(diff, axis=-1)
    dot = np.einsum("xsk,sk->xs", diff, normals)
    ks = params.kappa * s
    e = np.exp(1j * ks)
    return e * ((1.0 - 1j * ks) * dot / s**2 - 1j * params.eta) / (FOUR_PI * s)


def evaluate_potential(solution, x):
    """Combined-field potential ``U(x)`` by the trapezoidal rule on the chart grids.

    Raises
    ------
    ProximityError
        If ``x`` is inside the surface or within ``2 h = 2 / N`` of a surface node.
    """
    op = solution.operator
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(np.linalg.norm(x / op.atlas.semiaxes, axis=-1) <= 1.0):
        raise ProximityError("potential requested inside the scatterer")
    near = np.min(np.linalg.norm(x[:, None, :] - op.points[None], axis=-1), axis=1)
    if np.any(near <= 2.0 / op.N):
        raise ProximityError("evaluation point within 2h of the surface")
    phi = solution.density.flat() * op.weights
    out = np.empty(x.shape[0], dtype=complex)
    for s in range(0, x.shape[0], 64):
        K = combined_kernel_at(x[s:s + 64], op.points, op.normals, op.params)
        out[s:s + 64] = K @ phi
    return out
