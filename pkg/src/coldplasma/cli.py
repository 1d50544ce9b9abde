"""Command-line entry point: ``coldplasma <subcommand> [options]``.

Every subcommand takes its parameters from flags, optionally preloaded
from an INI file (``--config``; sections ``[global]`` and one named after
the subcommand, keys spelled like the long flags with dashes or
underscores). The effective parameters are written to ``config.ini`` in
the output directory, and running with that file reproduces the outputs
byte for byte.

Exit codes: 0 ok, 1 internal error or failed verification, 2 bad
configuration.

CSV schemas
-----------
criterion    criterion.csv  x, v0, e0, e0p, lhs, rhs, margin, blowup
             point.csv      v0, e0, e0p, lhs, rhs, margin, blowup   (point mode)
phase        equilibria.csv nu, e, v, kind, re1, im1, re2, im2
             boundary.csv   nu, curve, e, v
characteristics
             sweep.csv      v0, e0, delta, blew_up, t_star, t_exact
             trajectory.csv t, x, V, E, v, e                          (single mode)
solve        {run_id}_{k}.csv   t, x, V, E, n   (one per snapshot)
             series.csv     t, max_vx, max_nx, max_ex, min_n, max_n
stochastic   moments_{k}.csv    t, x, rho, Vhat, Ehat   (one per checkpoint)
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .state import ConfigError

log = logging.getLogger("coldplasma")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(",", " ").split()]


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# -- argument parser ------------------------------------------------------------

def _common(p):
    g = p.add_argument_group("global")
    g.add_argument("--config", help="INI file with [global] and per-subcommand sections")
    g.add_argument("--out", default=None, help="output directory (default: out/<subcommand>)")
    g.add_argument("--seed", type=int, default=1, help="random seed (default: 1)")
    g.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    g.add_argument("-v", "--verbose", action="count", default=0, help="more logging")


def _initial(p, a=0.05):
    g = p.add_argument_group("initial data")
    g.add_argument("--preset", default="laser_pulse",
                   help="laser_pulse|laser|gaussian_e|gaussian_v|zero|custom_table (default: laser_pulse)")
    g.add_argument("--a", type=float, default=a, help=f"amplitude (default: {a})")
    g.add_argument("--sign", type=float, default=None, help="laser pulse sign convention, +1 or -1")
    g.add_argument("--s", type=float, default=None, help="gaussian width")
    g.add_argument("--table", default=None, help="CSV with columns x,V,E for custom_table")


def _grid(p, x_min=-20.0, x_max=20.0, n_cells=4096):
    g = p.add_argument_group("grid")
    g.add_argument("--x-min", type=float, default=x_min, help=f"(default: {x_min})")
    g.add_argument("--x-max", type=float, default=x_max, help=f"(default: {x_max})")
    g.add_argument("--n-cells", type=int, default=n_cells, help=f"(default: {n_cells})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coldplasma", description=__doc__.split("\n\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("criterion", help="pointwise blow-up criterion over x or at one point")
    _common(p)
    _initial(p)
    _grid(p)
    p.add_argument("--alpha", type=float, default=0.0, help="pressure coefficient (default: 0)")
    p.add_argument("--gamma", type=float, default=2.0, help="pressure exponent (default: 2)")
    p.add_argument("--v0", type=float, default=None, help="point mode: v0")
    p.add_argument("--e0", type=float, default=None, help="point mode: e0")
    p.add_argument("--e0p", type=float, default=0.0, help="point mode: e0' (pressure criterion)")

    p = sub.add_parser("phase", help="equilibria and smoothness boundary of the friction system")
    _common(p)
    p.add_argument("--nu", type=_floats, default=[0.0, 1.0, 3.0, 10.0], help="comma list (default: 0,1,3,10)")
    p.add_argument("--box", type=float, default=2.0, help="half-width of the (e, v) box (default: 2)")
    p.add_argument("--rays", type=int, default=360, help="number of bisection rays (default: 360)")

    p = sub.add_parser("characteristics", help="blow-up sweep over (v0, e0) or one characteristic")
    _common(p)
    p.add_argument("--nu", type=float, default=0.0, help="friction (default: 0)")
    p.add_argument("--n", type=int, default=101, help="sweep points per axis (default: 101)")
    p.add_argument("--box", type=float, default=2.0, help="sweep half-width (default: 2)")
    p.add_argument("--t-end", type=float, default=100.0, help="(default: 100)")
    p.add_argument("--threshold", type=float, default=1e8, help="blow-up threshold on |v|, |e| (default: 1e8)")
    p.add_argument("--v0", type=float, default=None, help="single mode: v0")
    p.add_argument("--e0", type=float, default=None, help="single mode: e0")
    p.add_argument("--V0", type=float, default=0.0, help="single mode: V0 (default: 0)")
    p.add_argument("--E0", type=float, default=0.0, help="single mode: E0 (default: 0)")

    p = sub.add_parser("solve", help="Eulerian field solver")
    _common(p)
    _initial(p)
    _grid(p)
    p.add_argument("--t-end", type=float, default=10.0, help="(default: 10)")
    p.add_argument("--output-dt", type=float, default=None, help="snapshot interval (default: start and end only)")
    p.add_argument("--cfl", type=float, default=0.4, help="(default: 0.4)")
    p.add_argument("--scheme", default="central", help="central|upwind (default: central)")
    p.add_argument("--nu", type=float, default=0.0, help="constant friction")
    p.add_argument("--nu0", type=float, default=0.0, help="density friction coefficient: nu0 * n^gamma_f")
    p.add_argument("--gamma-f", type=float, default=1.0, help="density friction exponent (default: 1)")
    p.add_argument("--alpha", type=float, default=0.0, help="pressure coefficient")
    p.add_argument("--gamma-p", type=float, default=2.0, help="pressure exponent (default: 2)")
    p.add_argument("--pressure-form", default="density", help="density|laplacian_e (default: density)")
    p.add_argument("--mu", type=float, default=0.0, help="viscosity")
    p.add_argument("--exotic", type=_bool, default=False, help="use mu (V_x / n)_x instead of mu V_xx")
    p.add_argument("--kappa", type=float, default=0.0, help="field diffusion")
    p.add_argument("--allow-combinations", type=_bool, default=False, help="permit several regularizers")
    p.add_argument("--resolution", type=float, default=None, help="grid-relative V_x trigger (default: off)")
    p.add_argument("--run-id", default="run", help="snapshot file prefix (default: run)")

    p = sub.add_parser("stochastic", help="stochastic characteristics and kernel moment fields")
    _common(p)
    _initial(p, a=0.3)
    _grid(p, -10.0, 10.0, 800)
    p.add_argument("--sigma", type=float, default=0.1, help="noise strength (default: 0.1)")
    p.add_argument("--n", type=int, default=100_000, help="particles (default: 100000)")
    p.add_argument("--t-end", type=float, default=math.pi, help="(default: pi)")
    p.add_argument("--dt", type=float, default=0.01, help="(default: 0.01)")
    p.add_argument("--checkpoints", type=_floats, default=None, help="comma list of output times (default: t-end)")
    p.add_argument("--bandwidth", default="0.1", help="kernel bandwidth or 'silverman' (default: 0.1)")
    p.add_argument("--half-width", type=float, default=7.0, help="plateau initial density half-width (default: 7)")

    p = sub.add_parser("verify", help="run acceptance suites and print a pass/fail matrix")
    _common(p)
    p.add_argument("--suite", default="all", help="suite name, comma list, or 'all' (default: all)")
    return ap


# -- config file handling --------------------------------------------------------

_SKIP = {"config", "out", "command", "help"}


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    first = ap.parse_args(argv)
    if not first.config:
        return first
    cp = configparser.ConfigParser()
    if not cp.read(first.config):
        raise ConfigError(f"cannot read config file {first.config}")
    subparser = ap._subparsers._group_actions[0].choices[first.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for section in ("global", first.command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest in _SKIP and dest != "out":
                continue
            if dest not in actions:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            act = actions[dest]
            if raw.strip().lower() == "none":
                defaults[dest] = None
            elif act.type is not None:
                try:
                    defaults[dest] = act.type(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {exc}") from None
            elif isinstance(act, argparse._CountAction):
                defaults[dest] = int(raw)
            else:
                defaults[dest] = raw
    subparser.set_defaults(**defaults)
    return ap.parse_args(argv)


def _echo_config(args, out: Path) -> None:
    cp = configparser.ConfigParser()
    cp[args.command] = {}
    for k, v in sorted(vars(args).items()):
        if k in _SKIP:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        cp[args.command][k] = "none" if v is None else str(v)
    with open(out / "config.ini", "w") as fh:
        cp.write(fh)


# -- helpers ----------------------------------------------------------------------

def _init_from(args):
    from .state import make_initial_data

    if args.preset == "zero":
        return make_initial_data("zero")
    if args.preset == "custom_table":
        if not args.table:
            raise ConfigError("custom_table needs --table")
        data = np.loadtxt(args.table, delimiter=",", skiprows=1, ndmin=2)
        return make_initial_data("custom_table", x=data[:, 0], V=data[:, 1], E=data[:, 2])
    params = {"a": args.a}
    if args.sign is not None:
        if args.preset not in ("laser_pulse", "laser"):
            raise ConfigError("--sign applies to the laser pulse only")
        params["sign"] = args.sign
    if args.s is not None:
        if args.preset not in ("gaussian_e", "gaussian_v"):
            raise ConfigError("--s applies to gaussian presets only")
        params["s"] = args.s
    return make_initial_data(args.preset, **params)


def _grid_from(args):
    from .state import Grid1D

    return Grid1D(args.x_min, args.x_max, args.n_cells)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(c) for c in r])


def _cell(c):
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return c


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


# -- subcommands ------------------------------------------------------------------

def cmd_criterion(args, out: Path) -> int:
    from .characteristics import delta, delta_p

    pressure = args.alpha > 0
    if args.v0 is not None or args.e0 is not None:
        if args.v0 is None or args.e0 is None:
            raise ConfigError("point mode needs both --v0 and --e0")
        if pressure:
            lhs, rhs = delta_p(args.v0, args.e0, args.e0p, args.alpha, args.gamma)
        else:
            lhs, rhs = delta(args.v0, args.e0), 0.0
        lhs, rhs = float(lhs), float(rhs)
        name = "Delta_p" if pressure else "Delta"
        _write_csv(out / "point.csv", ["v0", "e0", "e0p", "lhs", "rhs", "margin", "blowup"],
                   [(args.v0, args.e0, args.e0p, lhs, rhs, lhs - rhs, lhs >= rhs)])
        print(f"{name} = {lhs:g}" + (f" (rhs {rhs:g})" if pressure else ""))
        print(f"verdict: {'blow-up' if lhs >= rhs else 'smooth'}")
        return 0
    if args.alpha < 0:
        raise ConfigError("alpha must be >= 0")
    init = _init_from(args)
    x = _grid_from(args).x
    v0, e0, e0p = init.v0(x), init.e0(x), init.e0p(x)
    if pressure:
        lhs, rhs = delta_p(v0, e0, e0p, args.alpha, args.gamma)
    else:
        lhs, rhs = delta(v0, e0), np.zeros_like(x)
    margin = lhs - rhs
    i = int(np.argmax(margin))
    verdict = "blow-up" if margin[i] >= 0 else "smooth"
    _write_csv(out / "criterion.csv", ["x", "v0", "e0", "e0p", "lhs", "rhs", "margin", "blowup"],
               zip(x, v0, e0, e0p, lhs, rhs, margin, margin >= 0))
    summary = {"criterion": "Delta_p" if pressure else "Delta", "verdict": verdict,
               "max_margin": float(margin[i]), "argmax_x": float(x[i])}
    _write_json(out / "summary.json", summary)
    print(f"verdict: {verdict} (max {summary['criterion']} margin {margin[i]:.6g} at x = {x[i]:.6g})")
    return 0


def cmd_phase(args, out: Path) -> int:
    from .characteristics import SeparatrixOptions, classify_equilibria, trace_separatrix

    if any(not (math.isfinite(nu) and nu >= 0) for nu in args.nu):
        raise ConfigError("nu must be >= 0")
    eq_rows, b_rows = [], []
    opts = SeparatrixOptions(n_rays=args.rays, box=args.box, max_radius=args.box * math.sqrt(2.0))
    for nu in args.nu:
        for eq in classify_equilibria(nu):
            l1, l2 = eq.eigenvalues
            eq_rows.append((nu, eq.location[0], eq.location[1], eq.kind, l1.real, l1.imag, l2.real, l2.imag))
            print(f"nu={nu:g}: {eq.kind} at (e, v) = ({eq.location[0]:.6g}, {eq.location[1]:.6g})")
        sep = trace_separatrix(nu, opts)
        for k, c in enumerate(sep.curves):
            b_rows.extend((nu, k, float(e), float(v)) for e, v in c)
    _write_csv(out / "equilibria.csv", ["nu", "e", "v", "kind", "re1", "im1", "re2", "im2"], eq_rows)
    _write_csv(out / "boundary.csv", ["nu", "curve", "e", "v"], b_rows)
    return 0


def cmd_characteristics(args, out: Path) -> int:
    from .characteristics import (CharSystemKind, IntegratorOptions, blowup_sweep, delta, exact_blowup_time,
                                  integrate_characteristic)
    from .state import CharState

    if args.nu < 0:
        raise ConfigError("nu must be >= 0")
    opts = IntegratorOptions(threshold=args.threshold, horizon=args.t_end)
    if args.v0 is not None or args.e0 is not None:
        if args.v0 is None or args.e0 is None:
            raise ConfigError("single mode needs both --v0 and --e0")
        kind = CharSystemKind(args.nu)
        traj, rep = integrate_characteristic(kind, CharState(0.0, 0.0, args.V0, args.E0, args.v0, args.e0),
                                             args.t_end, opts)
        _write_csv(out / "trajectory.csv", ["t", "x", "V", "E", "v", "e"],
                   (tuple([t]) + tuple(y) for t, y in zip(traj.t, traj.y)))
        _write_json(out / "report.json", {"blew_up": rep.blew_up, "t_star": rep.t_star, "witness": rep.witness})
        print(f"blew_up={rep.blew_up} t_star={rep.t_star}")
        return 0
    g = np.linspace(-args.box, args.box, args.n)
    V0, E0 = np.meshgrid(g, g, indexing="ij")
    v0, e0 = V0.ravel(), E0.ravel()
    res = blowup_sweep(args.nu, v0, e0, args.t_end, opts)
    d = delta(v0, e0)
    exact = exact_blowup_time(v0, e0) if args.nu == 0 else np.full(v0.shape, np.nan)
    _write_csv(out / "sweep.csv", ["v0", "e0", "delta", "blew_up", "t_star", "t_exact"],
               zip(v0, e0, d, res.blew_up, res.t_star, exact))
    print(f"{int(res.blew_up.sum())} of {v0.size} points blow up by t={args.t_end:g}")
    return 0


def cmd_solve(args, out: Path) -> int:
    from .fields import SolverConfig, Thresholds, run_to_json, solve, write_snapshots
    from .state import RegularizerSpec

    reg = RegularizerSpec(nu_const=args.nu, nu_density=(args.nu0, args.gamma_f) if args.nu0 > 0 else None,
                          alpha=args.alpha, gamma_p=args.gamma_p, mu=args.mu, exotic_viscosity=args.exotic,
                          kappa=args.kappa, pressure_form=args.pressure_form,
                          allow_combinations=args.allow_combinations)
    cfg = SolverConfig(grid=_grid_from(args), t_end=args.t_end, cfl=args.cfl, output_dt=args.output_dt, reg=reg,
                       scheme=args.scheme, thresholds=Thresholds(resolution=args.resolution))
    run = solve(_init_from(args), cfg)
    write_snapshots(run, out, args.run_id)
    _write_csv(out / "series.csv", ["t", "max_vx", "max_nx", "max_ex", "min_n", "max_n"],
               zip(run.t, run.max_vx, run.max_nx, run.max_ex, run.min_n, run.max_n))
    _write_json(out / "report.json", run_to_json(run)["report"] | {"steps": run.steps,
                                                                 "detected_at": run.detected_at,
                                                                 "snapshots": len(run.states)})
    r = run.report
    print(f"blew_up={r.blew_up} t_star={r.t_star} witness={r.witness} steps={run.steps}")
    return 0


def cmd_stochastic(args, out: Path) -> int:
    from .stochastic import (estimate_moments, evolve, init_ensemble, moments_to_rows, plateau_density,
                             save_checkpoint)

    grid = _grid_from(args)
    bw = args.bandwidth if args.bandwidth == "silverman" else float(args.bandwidth)
    ens = init_ensemble(_init_from(args), plateau_density(args.half_width), args.n, args.sigma, args.seed, grid)
    times = sorted(args.checkpoints) if args.checkpoints else [args.t_end]
    if times[-1] > args.t_end + 1e-12:
        raise ConfigError("checkpoints must not exceed t-end")
    written = []

    def dump(e):
        m = estimate_moments(e, grid, bw)
        p = out / f"moments_{len(written)}.csv"
        _write_csv(p, ["t", "x", "rho", "Vhat", "Ehat"], moments_to_rows(m))
        written.append((e.t, m.mass))

    final = evolve(ens, args.t_end, args.dt, workers=args.threads, checkpoints=times, callback=dump)
    save_checkpoint(final, out / "ensemble_final.bin")
    for t, mass in written:
        print(f"t={t:.6g} mass={mass:.6f}")
    return 0


def cmd_verify(args, out: Path) -> int:
    from .verify import SUITES, run_suite

    names = list(SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",") if s.strip()]
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; choose from {', '.join(SUITES)}")
    results = []
    for n in names:
        r = run_suite(n)
        print(r.line(), flush=True)
        results.append(r)
    _write_json(out / "verify.json", {r.name: {"passed": r.passed, "summary": r.summary} for r in results})
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed" + (f"; failed: {', '.join(failed)}"
                                                                         if failed else ""))
    return 1 if failed else 0


COMMANDS = {
    "criterion": cmd_criterion,
    "phase": cmd_phase,
    "characteristics": cmd_characteristics,
    "solve": cmd_solve,
    "stochastic": cmd_stochastic,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        out = Path(args.out) if args.out else Path("out") / args.command
        out.mkdir(parents=True, exist_ok=True)
        _echo_config(args, out)
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
