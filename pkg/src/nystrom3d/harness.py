"""Experiment driver: configuration, convergence sweeps, quadrature and Hermite studies, reports.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Lists are comma separated.  Every key has a default, so an empty file is a
valid configuration.
"""

import csv
import io
import json
import logging
import math
import os
import subprocess
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import trig
from .errors import ConfigError, NystromError, ParameterError
from .geometry import build_ellipsoid_atlas, build_sphere_atlas, smooth_step
from .kernels import ScatteringParams
from .oracle import MieSeries, adaptive_integral_polar, polar_mode_integrals
from .quadrature import PolarCutoff, grid_offset, make_polar_rule, polar_rule_nodes
from .solver import build_operator, delta_schedule, evaluate_potential, solve

__all__ = [
    "ExperimentConfig",
    "Report",
    "ConvergenceReport",
    "QuadTestReport",
    "HermiteReport",
    "load_config",
    "probe_points",
    "hermite_m_rule",
    "hermite_order_study",
    "fit_order",
    "run_convergence",
    "run_quadtest",
    "run_hermite_compare",
    "run_solve",
    "emit_report",
]

log = logging.getLogger(__name__)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _optional_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _optional_int(text):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % text)


@dataclass(frozen=True)
class ExperimentConfig:
    """All experiment settings.  Keys of the text format equal the field names."""

    geometry: str = "sphere"
    semiaxes: tuple = (1.0, 1.0, 1.0)
    overlap: float = 0.7
    padding: float = 0.4
    steepness: float = 4.0
    eps0: float = 0.05
    eps1: float = 1.0
    delta0: float = None
    kappa: float = 1.0
    eta: float = None
    direction: tuple = (0.0, 0.0, 1.0)
    N: tuple = (16, 24, 32, 48)
    beta: float = 1.0 / 3.0
    alpha: float = 0.5
    delta_coeff: float = 1.0
    theta_factor: float = 2.0
    variant: str = "base"
    hermite_d: int = 2
    hermite_m: int = None
    hermite_r: float = 1.0
    solver: str = "gmres"
    tol: float = 1e-12
    restart: int = 50
    maxiter: int = None
    probe_radius: float = 2.0
    probe_count: int = 200
    quad_eps0: float = 0.3
    quad_center: tuple = (0.3141, 0.2718)
    quad_cos2: float = 0.5
    seed: int = 0
    timing: bool = True
    output_dir: str = "."
    output_prefix: str = "report"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.geometry not in ("sphere", "ellipsoid"):
            raise ConfigError("geometry must be 'sphere' or 'ellipsoid'")
        if len(self.semiaxes) != 3 or min(self.semiaxes) <= 0:
            raise ConfigError("semiaxes must be three positive numbers")
        if len(self.direction) != 3 or not np.linalg.norm(self.direction) > 0:
            raise ConfigError("direction must be a nonzero 3-vector")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1), got %g" % self.beta)
        if not self.N:
            raise ConfigError("N list is empty")
        if any(n < 4 for n in self.N):
            raise ConfigError("every N must be at least 4")
        if any(b <= a for a, b in zip(self.N, self.N[1:])):
            raise ConfigError("N list must be strictly increasing")
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive")
        if not self.alpha > 0 or not self.delta_coeff > 0 or not self.theta_factor > 0:
            raise ConfigError("alpha, delta_coeff and theta_factor must be positive")
        if self.variant not in ("base", "hermite"):
            raise ConfigError("variant must be 'base' or 'hermite'")
        if self.hermite_d < 1 or (self.hermite_m is not None and self.hermite_m < 1):
            raise ConfigError("hermite_d and hermite_m must be at least 1")
        if self.solver not in ("gmres", "dense"):
            raise ConfigError("solver must be 'gmres' or 'dense'")
        if not 0.0 < self.tol < 1.0:
            raise ConfigError("tol must lie in (0, 1)")
        if not 0.0 < self.eps0 < self.eps1 <= 1.0:
            raise ConfigError("need 0 < eps0 < eps1 <= 1")
        if not 0.0 < self.quad_eps0 < 1.0:
            raise ConfigError("quad_eps0 must lie in (0, 1)")
        if self.probe_count < 1 or not self.probe_radius > 1.0:
            raise ConfigError("probe sphere must have radius > 1 and at least one point")

    @classmethod
    def from_text(cls, text, overrides=()):
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("line %d: expected key = value" % lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        for item in overrides:
            if "=" not in item:
                raise ConfigError("override %r is not key=value" % item)
            key, value = (part.strip() for part in item.split("=", 1))
            values[key] = value
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values):
        parsers = _parsers()
        kwargs = {}
        for key, value in values.items():
            if key not in parsers:
                raise ConfigError("unknown configuration key %r" % key)
            try:
                kwargs[key] = parsers[key](value) if isinstance(value, str) else value
            except ValueError as exc:
                raise ConfigError("bad value for %s: %s" % (key, exc)) from exc
        if "N" in kwargs:
            kwargs["N"] = tuple(kwargs["N"])
        return cls(**kwargs)

    def with_overrides(self, overrides):
        text = "\n".join("%s = %s" % kv for kv in self.as_text_items())
        return ExperimentConfig.from_text(text, overrides)

    def as_text_items(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(repr(x) for x in v)
            else:
                s = repr(v) if not isinstance(v, str) else v
            out.append((f.name, s))
        return out

    def snapshot(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def atlas(self):
        kw = dict(overlap=self.overlap, eps0=self.eps0, eps1=self.eps1, padding=self.padding,
                  steepness=self.steepness, delta0=self.delta0)
        try:
            if self.geometry == "sphere":
                if tuple(self.semiaxes) != (1.0, 1.0, 1.0):
                    raise ConfigError("sphere geometry requires unit semiaxes")
                return build_sphere_atlas(**kw)
            return build_ellipsoid_atlas(self.semiaxes, **kw)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc

    def params(self):
        return ScatteringParams(self.kappa, self.eta)


def _parsers():
    return {
        "geometry": str.strip,
        "semiaxes": _floats,
        "overlap": float,
        "padding": float,
        "steepness": float,
        "eps0": float,
        "eps1": float,
        "delta0": _optional_float,
        "kappa": float,
        "eta": _optional_float,
        "direction": _floats,
        "N": _ints,
        "beta": float,
        "alpha": float,
        "delta_coeff": float,
        "theta_factor": float,
        "variant": str.strip,
        "hermite_d": int,
        "hermite_m": _optional_int,
        "hermite_r": float,
        "solver": str.strip,
        "tol": float,
        "restart": int,
        "maxiter": _optional_int,
        "probe_radius": float,
        "probe_count": int,
        "quad_eps0": float,
        "quad_center": _floats,
        "quad_cos2": float,
        "seed": int,
        "timing": _bool,
        "output_dir": str.strip,
        "output_prefix": str.strip,
    }


def load_config(path=None, overrides=()):
    """Read a configuration file (or defaults when ``path`` is None) and apply overrides."""
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("cannot read configuration %s: %s" % (path, exc)) from exc
    return ExperimentConfig.from_text(text, overrides)


# ---------------------------------------------------------------------------
# reports


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _json_value(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def _from_json_value(value):
    if value in ("nan", "inf", "-inf"):
        return float(value)
    if isinstance(value, dict):
        return {k: _from_json_value(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_from_json_value(v) for v in value]
    return value


class Report:
    """Rows of numbers with fixed column names plus free-form metadata."""

    kind = "report"
    columns = ()

    def __init__(self, rows=None, metadata=None):
        self.rows = [dict(r) for r in (rows or [])]
        self.metadata = dict(metadata or {})

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self):
        payload = {"kind": self.kind, "columns": list(self.columns),
                   "rows": [_json_value(r) for r in self.rows],
                   "metadata": _json_value(self.metadata)}
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        kinds = {k.kind: k for k in (Report, ConvergenceReport, QuadTestReport, HermiteReport)}
        klass = kinds.get(payload.get("kind"), cls)
        return klass(_from_json_value(payload["rows"]), _from_json_value(payload["metadata"]))

    def __eq__(self, other):
        if not isinstance(other, Report):
            return NotImplemented
        return self.to_json() == other.to_json()


class ConvergenceReport(Report):
    kind = "convergence"
    columns = ("N", "h", "delta", "Theta", "unknowns", "e_l2", "e_linf", "order_l2",
               "order_linf", "iters", "seconds")


class QuadTestReport(Report):
    kind = "quadtest"
    columns = ("N", "h", "delta", "Theta", "nodes", "e_one", "e_mode", "e_random", "worst_l2",
               "bound", "ratio", "seconds")


class HermiteReport(Report):
    kind = "hermite"
    columns = ("N", "m", "d", "delta", "gap", "base_error", "hermite_error", "base_field_error",
               "hermite_field_error", "violation", "seconds")


def emit_report(report, fmt, path):
    """Write ``report`` as ``csv`` or ``json`` to ``path`` and return the path."""
    if fmt == "csv":
        text = report.to_csv()
    elif fmt == "json":
        text = report.to_json() + "\n"
    else:
        raise ParameterError("format must be 'csv' or 'json'")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=10, cwd=os.path.dirname(os.path.abspath(__file__)))
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _metadata(config, **extra):
    meta = {"config": config.snapshot(), "git": _git_describe(), "seed": config.seed}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# helpers


def probe_points(count=200, radius=2.0):
    """Fibonacci points on the sphere of the given radius."""
    i = np.arange(count) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azim = math.pi * (1.0 + math.sqrt(5.0)) * i
    return radius * np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar),
                              np.cos(polar)], -1)


def rate(e_coarse, e_fine, n_coarse, n_fine):
    """Observed order between two runs (``log2(e_N / e_2N)`` when ``n_fine = 2 n_coarse``)."""
    if not (e_coarse > 0 and e_fine > 0):
        return float("nan")
    if n_fine == 2 * n_coarse:
        return math.log2(e_coarse / e_fine)
    return math.log(e_coarse / e_fine) / math.log(n_fine / n_coarse)


def fit_order(hs, errors):
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[ok]), np.log(errors[ok]), 1)[0])


def hermite_m_rule(N, beta, r, d, coeff=1.0):
    """Smallest ``m`` with ``m^-(2d+2) <= h^(1 - beta + r)``, times ``coeff``."""
    expo = (1.0 - beta + r) / (2 * d + 2)
    return max(1, int(math.ceil(coeff * N**expo - 1e-9)))


def hermite_order_study(d, cells=(8, 16, 32, 64), samples=4001):
    """Max error of piecewise Hermite interpolation of ``sin(2 pi x)`` and the fitted order."""
    x = np.linspace(0.0, 1.0, samples)
    exact = np.sin(2.0 * math.pi * x)
    errs = []
    for P in cells:
        t = np.arange(P + 1) / P
        data = np.stack([(2.0 * math.pi) ** r * np.sin(2.0 * math.pi * t + r * math.pi / 2.0)
                         for r in range(d + 1)], -1)
        interp = trig.hermite_interpolate(data, 1.0 / P, d)
        errs.append(float(np.max(np.abs(trig.hermite_eval(interp, x) - exact))))
    return errs, fit_order([1.0 / P for P in cells], errs)


def _weighted_norm(op, values):
    return float(np.sqrt(np.sum(op.weights * np.abs(values) ** 2)))


def _solve_one(config, atlas, N, variant=None):
    params = config.params()
    delta = delta_schedule(atlas, N, config.beta, config.delta_coeff)
    rule = make_polar_rule(N, config.alpha, config.theta_factor)
    op = build_operator(params, atlas, delta, rule, variant)
    return solve(params, atlas, delta, rule, op.rhs(config.direction), variant=variant,
                 method=config.solver, tol=config.tol, restart=config.restart,
                 maxiter=config.maxiter)


def _variant(config, N):
    if config.variant == "base":
        return None
    m = config.hermite_m or hermite_m_rule(N, config.beta, config.hermite_r, config.hermite_d)
    return (m, config.hermite_d)


# ---------------------------------------------------------------------------
# experiments


def run_solve(config):
    """Single solve at the largest ``N``; returns a one-row :class:`ConvergenceReport`."""
    return run_convergence(replace(config, N=(config.N[-1],)))


def run_convergence(config):
    """Solve for every ``N`` and tabulate field errors and observed orders.

    Field errors are relative discrete L2 and max norms on the probe sphere,
    measured against the Mie series for the sphere and against the finest
    run otherwise.  On solver failure the partial report is attached to the
    exception as ``exc.report``.
    """
    atlas = config.atlas()
    probes = probe_points(config.probe_count, config.probe_radius)
    mie = None
    if config.geometry == "sphere":
        mie = MieSeries(config.kappa, eta=config.params().eta, direction=config.direction)
        reference = mie.scattered_field(probes)
    report = ConvergenceReport(metadata=_metadata(config, reference="mie" if mie else "finest",
                                                   delta0=atlas.delta0))
    fields_, density_errors = [], []
    try:
        for N in config.N:
            t0 = time.perf_counter()
            sol = _solve_one(config, atlas, N, _variant(config, N))
            field = evaluate_potential(sol, probes)
            seconds = time.perf_counter() - t0 if config.timing else 0.0
            op = sol.operator
            fields_.append(field)
            if mie is not None:
                exact = mie.density(op.points)
                density_errors.append(_weighted_norm(op, sol.density.flat() - exact)
                                      / _weighted_norm(op, exact))
            report.rows.append({"N": N, "h": 1.0 / N, "delta": op.delta, "Theta": op.rule.Theta,
                                "unknowns": op.n, "iters": sol.iterations, "seconds": seconds,
                                "residual": sol.residual})
            log.info("N=%d solved (%d unknowns, %d iterations)", N, op.n, sol.iterations)
    except NystromError as exc:
        _fill_errors(report, fields_, reference if mie is not None else None, density_errors)
        exc.report = report
        raise
    _fill_errors(report, fields_, reference if mie is not None else None, density_errors)
    return report


def _fill_errors(report, fields_, reference, density_errors):
    if not fields_:
        return
    if reference is None:
        reference = fields_[-1]
    for row, field in zip(report.rows, fields_):
        diff = field - reference
        row["e_l2"] = float(np.linalg.norm(diff) / np.linalg.norm(reference))
        row["e_linf"] = float(np.max(np.abs(diff)) / np.max(np.abs(reference)))
    for row, err in zip(report.rows, density_errors):
        row["e_density"] = err
    for prev, row in zip([None] + report.rows[:-1], report.rows):
        for key in ("l2", "linf"):
            row["order_" + key] = float("nan") if prev is None else rate(
                prev["e_" + key], row["e_" + key], prev["N"], row["N"])
    by_n = {row["N"]: row for row in report.rows}
    report.metadata["doubling_orders"] = {
        str(n): math.log2(by_n[n]["e_l2"] / by_n[2 * n]["e_l2"])
        for n in by_n if 2 * n in by_n and by_n[2 * n]["e_l2"] > 0}


def _quad_profile(config, delta):
    eps0 = config.quad_eps0

    def radial(rho):
        return smooth_step((np.abs(rho) / delta - eps0) / (1.0 - eps0))

    return radial, (0.0, eps0 * delta, delta)


def run_quadtest(config):
    """Error of the polar rule ``Q_{h,k,gamma}`` on ``chi_delta xi_N`` with ``delta = C h^beta``.

    For each ``N`` the test factor is ``chi(rho, theta) = upsilon(|rho|/delta)
    (1 + a cos 2 theta)`` with the offsets of a grid-aligned centre.  Reported
    errors: ``xi = 1`` and ``xi = e_(2,1) / ||e_(2,1)||_4`` (checked against
    adaptive cubature), a random ``xi`` with ``||xi||_4 = 1``, and the worst
    case over ``||xi||_0 = 1`` (the l2 norm of the per-mode errors), which
    is compared with ``h / delta |log h| + delta``.
    """
    rng = np.random.default_rng(config.seed)
    center = np.asarray(config.quad_center, dtype=float)
    a2 = config.quad_cos2
    report = QuadTestReport(metadata=_metadata(config))
    for N in config.N:
        t0 = time.perf_counter()
        h = 1.0 / N
        delta = config.delta_coeff * h**config.beta
        if not delta < 0.5 or not h < delta:
            raise ConfigError("quadrature test needs h < delta < 1/2")
        rule = make_polar_rule(N, config.alpha, config.theta_factor)
        radial, breaks = _quad_profile(config, delta)
        chi = PolarCutoff(lambda rho, th: radial(rho) * (1.0 + a2 * np.cos(2.0 * th)), delta)
        rho, theta, w = polar_rule_nodes(delta, grid_offset(center, h), h, rule.k)
        wt = w * chi(rho, theta)
        pts = center + rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], -1)
        k = trig.frequencies(N)
        E1 = np.exp(2j * math.pi * np.outer(pts[:, 0], k))
        E2 = np.exp(2j * math.pi * np.outer(pts[:, 1], k))
        discrete = (E1 * wt[:, None]).T @ E2
        exact = polar_mode_integrals(N, radial, breaks, a2, center)
        mode_err = discrete - exact
        zero = N // 2
        checks = {}
        for name, (m1, m2) in (("one", (0, 0)), ("mode", (2, 1))):
            ref, est = adaptive_integral_polar(
                lambda r, t, m1=m1, m2=m2: chi(r, t) * np.exp(2j * math.pi * (
                    m1 * (center[0] + r * np.cos(t)) + m2 * (center[1] + r * np.sin(t)))), delta)
            checks[name] = abs(ref - exact[zero + m1, zero + m2])
        norm4 = 5.0 ** 2  # ||e_(2,1)||_4 = |m|^4 with |m|^2 = 5
        coeffs = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
        msq = k[:, None] ** 2 + k[None, :] ** 2
        coeffs /= (1.0 + msq) ** 3
        coeffs /= trig.sobolev_norm(trig.TrigPoly(coeffs), 4)
        row = {
            "N": N, "h": h, "delta": delta, "Theta": rule.Theta, "nodes": int(rho.size),
            "e_one": float(abs(mode_err[zero, zero])),
            "e_mode": float(abs(mode_err[zero + 2, zero + 1]) / norm4),
            "e_random": float(abs(np.sum(coeffs * mode_err))),
            "worst_l2": float(np.sqrt(np.sum(np.abs(mode_err) ** 2))),
            "bound": h / delta * abs(math.log(h)) + delta,
            "oracle_gap": max(checks.values()),
        }
        row["ratio"] = row["worst_l2"] / row["bound"]
        row["seconds"] = time.perf_counter() - t0 if config.timing else 0.0
        report.rows.append(row)
    hs = report.column("h")
    ratios = report.column("ratio")
    report.metadata.update(
        order_mode=fit_order(hs, report.column("e_mode")),
        order_random=fit_order(hs, report.column("e_random")),
        order_one=fit_order(hs, report.column("e_one")),
        ratio_spread=max(ratios) / min(ratios),
        predicted_order=4 - 3 * config.beta,
    )
    return report


def run_hermite_compare(config):
    """Solve with the base scheme and the Hermite variant for every ``N``.

    ``gap`` is the surface L2 norm of the difference of the two densities;
    ``base_error`` and ``hermite_error`` are relative surface L2 density
    errors against the exact sphere density (or against the finest base run
    for other geometries).  ``violation`` flags rows where the gap exceeds
    the base error.
    """
    atlas = config.atlas()
    probes = probe_points(config.probe_count, config.probe_radius)
    sphere = config.geometry == "sphere"
    mie = MieSeries(config.kappa, eta=config.params().eta, direction=config.direction) \
        if sphere else None
    errs, order = hermite_order_study(config.hermite_d)
    report = HermiteReport(metadata=_metadata(config, interpolation_errors=errs,
                                              interpolation_order=order,
                                              interpolation_expected=2 * config.hermite_d + 2))
    field_ref = mie.scattered_field(probes) if sphere else None
    runs = []
    for N in config.N:
        t0 = time.perf_counter()
        m = config.hermite_m or hermite_m_rule(N, config.beta, config.hermite_r,
                                               config.hermite_d)
        base = _solve_one(config, atlas, N)
        herm = _solve_one(config, atlas, N, (m, config.hermite_d))
        runs.append((N, m, base, herm, t0))
    if not sphere:
        field_ref = evaluate_potential(runs[-1][2], probes)
    for N, m, base, herm, t0 in runs:
        op = base.operator
        if sphere:
            exact = mie.density(op.points)
        else:
            exact = base.density.flat() if N == runs[-1][0] else None
        gap = _weighted_norm(op, herm.density.flat() - base.density.flat())
        row = {"N": N, "m": m, "d": config.hermite_d, "delta": op.delta, "gap": gap}
        if exact is not None:
            scale = _weighted_norm(op, exact)
            row["gap"] = gap / scale
            row["base_error"] = _weighted_norm(op, base.density.flat() - exact) / scale
            row["hermite_error"] = _weighted_norm(op, herm.density.flat() - exact) / scale
        else:
            row["base_error"] = row["hermite_error"] = float("nan")
        for key, sol in (("base_field_error", base), ("hermite_field_error", herm)):
            diff = evaluate_potential(sol, probes) - field_ref
            row[key] = float(np.linalg.norm(diff) / np.linalg.norm(field_ref))
        row["violation"] = bool(row["gap"] > row["base_error"]) if exact is not None else False
        row["seconds"] = time.perf_counter() - t0 if config.timing else 0.0
        report.rows.append(row)
    return report
