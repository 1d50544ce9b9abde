"""Density-dependent friction nu0 * n**gamma at the max-Delta = 0.3 laser pulse.

Runs the Eulerian solver and, as an independent check, a Lagrangian
mass-coordinate model: particles x(xi, t) with x'' = -(x - xi + E0(xi))
- nu0 n^gamma x', where n = n0(xi) / x_xi. The Lagrangian model has no
advection error, and blow-up there means x_xi -> 0 (particles cross).

    python scripts/density_friction_scan.py [--nu0 0.3] [--gammas 0.25,0.5,1,1.5,2] [--t-end 60]
"""
import argparse

import numpy as np
from scipy.integrate import solve_ivp

from coldplasma.diagnostics import amplitude_for_delta, text_table
from coldplasma.fields import SolverConfig, solve
from coldplasma.state import Grid1D, RegularizerSpec, make_initial_data


def lagrangian_run(init, nu0, gamma, M=1500, t_end=60.0, jmin=1e-6, span=6.0):
    """Time at which min x_xi falls below ``jmin`` (nan if it never does)."""
    xi = np.linspace(-span, span, M)
    dxi = xi[1] - xi[0]
    E0 = init.E0(xi)
    n0c = 1.0 - init.e0(0.5 * (xi[1:] + xi[:-1]))

    def f(_t, y):
        x, u = y[:M], y[M:]
        nc = n0c / (np.diff(x) / dxi)
        n = np.empty(M)
        n[1:-1] = 0.5 * (nc[1:] + nc[:-1])
        n[0], n[-1] = nc[0], nc[-1]
        return np.concatenate([u, -(x - xi + E0) - nu0 * np.abs(n) ** gamma * u])

    def crossing(_t, y):
        return np.diff(y[:M]).min() / dxi - jmin

    crossing.terminal = True
    sol = solve_ivp(f, (0.0, t_end), np.concatenate([xi, np.zeros(M)]), method="LSODA",
                    rtol=1e-8, atol=1e-11, events=crossing)
    return float(sol.t[-1]) if sol.status == 1 else float("nan")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--nu0", type=float, default=0.3)
    ap.add_argument("--gammas", default="0.25,0.5,1,1.5,2")
    ap.add_argument("--t-end", type=float, default=60.0)
    ap.add_argument("--n-cells", type=int, default=2048)
    ap.add_argument("--particles", type=int, default=1500)
    args = ap.parse_args()

    a = amplitude_for_delta(0.3)
    init = make_initial_data("laser_pulse", a=a)
    rows = []
    for g in [float(s) for s in args.gammas.split(",")]:
        cfg = SolverConfig(grid=Grid1D(-10.0, 10.0, args.n_cells), t_end=args.t_end,
                           reg=RegularizerSpec(nu_density=(args.nu0, g)))
        run = solve(init, cfg)
        t_lag = lagrangian_run(init, args.nu0, g, args.particles, args.t_end)
        rows.append((g, run.report.blew_up, run.detected_at if run.detected_at is not None else float("nan"), t_lag))
        print(rows[-1], flush=True)
    print(f"a = {a:.6f}, nu0 = {args.nu0}")
    print(text_table(rows, ["gamma", "eulerian blow-up", "eulerian t", "lagrangian t"]))


if __name__ == "__main__":
    main()
