"""Plane wave on the unit sphere: solve once and compare with the separation-of-variables solution.

Run:  python3 demos/sphere_scattering.py [N]
"""

import sys
import time

import numpy as np

from nystrom3d import ScatteringParams, build_sphere_atlas, evaluate_potential, solve
from nystrom3d.harness import probe_points
from nystrom3d.oracle import MieSeries
from nystrom3d.quadrature import make_polar_rule
from nystrom3d.solver import assemble_psi, delta_schedule, plane_wave_rhs


def main(N=24):
    atlas = build_sphere_atlas()
    params = ScatteringParams(kappa=1.0)
    delta = delta_schedule(atlas, N)
    rule = make_polar_rule(N)
    t0 = time.perf_counter()
    sol = solve(params, atlas, delta, rule, plane_wave_rhs(params, atlas, delta, rule))
    print("N=%d: %d unknowns, %d GMRES iterations, residual %.1e, %.1fs"
          % (N, sol.operator.n, sol.iterations, sol.residual, time.perf_counter() - t0))

    mie = MieSeries(1.0)
    probes = probe_points(200, 2.0)
    field = evaluate_potential(sol, probes)
    exact = mie.scattered_field(probes)
    print("scattered field at |x| = 2: relative L2 error %.2e"
          % (np.linalg.norm(field - exact) / np.linalg.norm(exact)))

    surface = probe_points(100, 1.0)
    psi = assemble_psi(sol, surface)
    ref = mie.density(surface)
    print("surface density:            relative L2 error %.2e"
          % (np.linalg.norm(psi - ref) / np.linalg.norm(ref)))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 24)
