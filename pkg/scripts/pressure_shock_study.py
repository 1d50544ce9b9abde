"""Growth of max|V_x|, max|n_x| and max|E_x| under refinement with pressure.

A value that doubles with each grid doubling is a jump at grid scale.
Run for sub- and supercritical amplitudes.

    python scripts/pressure_shock_study.py [--alpha 1] [--t-end 8]
"""
import argparse

from coldplasma.diagnostics import text_table
from coldplasma.fields import SolverConfig, solve
from coldplasma.state import Grid1D, RegularizerSpec, make_initial_data


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--t-end", type=float, default=8.0)
    ap.add_argument("--amplitudes", default="0.3,0.5,0.7283")
    args = ap.parse_args()
    rows = []
    for a in [float(s) for s in args.amplitudes.split(",")]:
        init = make_initial_data("laser_pulse", a=a)
        for n in (512, 1024, 2048):
            run = solve(init, SolverConfig(grid=Grid1D(-10.0, 10.0, n), t_end=args.t_end,
                                           reg=RegularizerSpec(alpha=args.alpha, gamma_p=args.gamma)))
            rows.append((a, n, run.report.blew_up, run.max_vx.max(), run.max_nx.max(), run.max_ex.max()))
            print(rows[-1], flush=True)
    print(text_table(rows, ["a", "cells", "blew_up", "max|V_x|", "max|n_x|", "max|E_x|"]))


if __name__ == "__main__":
    main()
