"""Distance of the stochastic moment fields to the deterministic solution as sigma shrinks.

    python scripts/stochastic_convergence.py [--n 100000] [--t 3.14159]
"""
import argparse
import math

from coldplasma.diagnostics import text_table
from coldplasma.state import make_initial_data
from coldplasma.stochastic import convergence_study, post_blowup_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--t", type=float, default=math.pi)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    init = make_initial_data("gaussian_v", a=0.4, s=1.0)
    rows = convergence_study(init, [0.4, 0.2, 0.1, 0.05], args.n, [args.t], workers=args.threads)
    print(text_table([(r.sigma, r.t, r.err_V, r.floor_V, r.excess_V) for r in rows],
                     ["sigma", "t", "err V", "floor V", "excess V"]))
    blow = make_initial_data("laser_pulse", a=1.3 * math.exp(1.5) / 8)
    for sigma in (0.2, 0.1, 0.05):
        r = post_blowup_check(blow, sigma, args.n, workers=args.threads)
        print(f"sigma={sigma}: t*={r['t_star']:.4f}, finite={r['finite']}, max rho {r['max_rho']:.4f}, "
              f"half bandwidth {r['max_rho_half_bandwidth']:.4f}")


if __name__ == "__main__":
    main()
