"""Acceptance suites.

Each suite runs one acceptance criterion at full scale and returns a
:class:`SuiteResult`. ``run_suites`` is what ``coldplasma verify`` and the
acceptance tests call.
"""
from __future__ import annotations

import hashlib
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .characteristics import (KINDS, IntegratorOptions, _phase_rhs, blowup_sweep,
                              classify_equilibria, delta, integrate_batch, kind_from_eigenvalues)
from .diagnostics import amplitude_for_delta, cole_hopf_residual, critical_amplitude, periodicity_check
from .fields import (SolverConfig, Thresholds, check_density_friction_threshold, classify_singularity,
                     solve)
from .state import ConfigError, Grid1D, RegularizerSpec, make_initial_data
from .stochastic import (convergence_study, estimate_moments, evolve, init_ensemble, plateau_density,
                         post_blowup_check, save_checkpoint)

BAND = 1e-2


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<18} {self.summary}"


def _phase_grid(n: int = 101, box: float = 2.0):
    v = np.linspace(-box, box, n)
    V0, E0 = np.meshgrid(v, v, indexing="ij")
    return V0.ravel(), E0.ravel()


# -- 1 -------------------------------------------------------------------------

def suite_delta_sweep(n: int = 101, t_end: float = 100.0, budget: float = 60.0) -> SuiteResult:
    """Characteristic integration agrees with sign(Delta) outside |Delta| < BAND."""
    v0, e0 = _phase_grid(n)
    t0 = time.perf_counter()
    res = blowup_sweep(0.0, v0, e0, t_end)
    secs = time.perf_counter() - t0
    d = delta(v0, e0)
    outside = np.abs(d) >= BAND
    mism = int(np.sum(outside & (res.blew_up != (d >= 0))))
    ok = mism == 0 and secs < budget
    return SuiteResult("delta_sweep", ok, f"{mism} mismatches outside band over {v0.size} points, {secs:.1f} s",
                       {"mismatches": mism, "points": int(v0.size), "seconds": secs, "budget": budget})


# -- 2 -------------------------------------------------------------------------

def suite_periodicity(a: float = 0.05, n_cells: int = 4096) -> SuiteResult:
    """A smooth laser-pulse run returns to its initial data at t = 2 pi."""
    grid = Grid1D(-20.0, 20.0, n_cells)
    init = make_initial_data("laser_pulse", a=a)
    cfg = SolverConfig(grid=grid, t_end=2 * math.pi, output_dt=2 * math.pi)
    run = solve(init, cfg)
    err = periodicity_check(run)
    dt = float(np.max(np.diff(run.t)))
    s0 = run.states[0]
    scale = float(max(np.max(np.abs(s0.V)), np.max(np.abs(s0.E))))
    tol = 10.0 * (grid.spacing ** 2 + dt ** 4) * scale
    return SuiteResult("periodicity", err <= tol, f"error {err:.3e} vs tolerance {tol:.3e}",
                       {"error": err, "tolerance": tol, "h": grid.spacing, "dt": dt})


# -- 3 -------------------------------------------------------------------------

def suite_sign_invariance(m: int = 10_000, t_end: float = 50.0, seed: int = 3) -> SuiteResult:
    """Delta keeps its sign along random characteristics of the original system."""
    rng = np.random.default_rng(seed)
    v0 = np.empty(0)
    e0 = np.empty(0)
    while v0.size < m:
        v = rng.uniform(-2, 2, m)
        e = rng.uniform(-2, 1, m)  # e0 < 1: positive initial density
        keep = (np.abs(delta(v, e)) > BAND) & (e < 1)
        v0, e0 = np.concatenate([v0, v[keep]]), np.concatenate([e0, e[keep]])
    v0, e0 = v0[:m], e0[:m]
    sign0 = np.sign(delta(v0, e0))
    flipped = np.zeros(m, bool)

    def watch(idx, t, y):
        with np.errstate(over="ignore", invalid="ignore"):
            d = y[3] * y[3] + 2 * y[4] - 1
        flipped[idx] |= np.sign(d) != sign0[idx]

    y0 = np.zeros((m, 5))
    y0[:, 3], y0[:, 4] = v0, e0
    res = integrate_batch(0.0, y0, t_end, IntegratorOptions(), on_step=watch)
    n_flip = int(flipped.sum())
    return SuiteResult("sign_invariance", n_flip == 0,
                       f"{n_flip} sign changes in {m} characteristics ({int(res.blew_up.sum())} blew up)",
                       {"flips": n_flip, "blew_up": int(res.blew_up.sum())})


# -- 4 -------------------------------------------------------------------------

def _numeric_kind(nu: float, loc) -> tuple[str, float]:
    rhs = _phase_rhs(nu)

    def f(t, z):
        return np.asarray(rhs(t, z), float)

    z = np.asarray(loc, float)
    resid = float(np.max(np.abs(f(0.0, z))))
    J = np.empty((2, 2))
    eps = 1e-6
    for j in range(2):
        dz = np.zeros(2)
        dz[j] = eps
        J[:, j] = (f(0.0, z + dz) - f(0.0, z - dz)) / (2 * eps)
    return kind_from_eigenvalues(np.linalg.eigvals(J), tol=1e-6), resid


def suite_friction(n_random: int = 50, seed: int = 4, n: int = 101, t_end: float = 100.0) -> SuiteResult:
    """Equilibrium taxonomy, nested smoothness domains, and blow-up still possible."""
    rng = np.random.default_rng(seed)
    regimes = {"0<nu<2": rng.uniform(1e-3, 2 - 1e-3, n_random), "nu>2": rng.uniform(2 + 1e-3, 20, n_random),
               "nu=0": np.zeros(1), "nu=2": np.full(1, 2.0)}
    bad = []
    for name, nus in regimes.items():
        for nu in nus:
            for eq in classify_equilibria(float(nu)):
                kind, resid = _numeric_kind(float(nu), eq.location)
                if kind != eq.kind or resid > 1e-9 or eq.kind not in KINDS:
                    bad.append((name, float(nu), eq.kind, kind))
    v0, e0 = _phase_grid(n)
    smooth = {nu: ~blowup_sweep(nu, v0, e0, t_end).blew_up for nu in (0.0, 1.0, 3.0, 10.0)}
    nested_01 = bool(np.all(smooth[1.0][smooth[0.0]]))
    nested_13 = bool(np.all(smooth[3.0][smooth[1.0]]))
    strict_01 = float(np.mean(smooth[1.0] & ~smooth[0.0]))
    strict_13 = float(np.mean(smooth[3.0] & ~smooth[1.0]))
    blowups = {nu: int(np.sum(~smooth[nu])) for nu in (1.0, 3.0, 10.0)}
    ok = (not bad and nested_01 and nested_13 and strict_01 >= 0.01 and strict_13 >= 0.01
          and all(b > 0 for b in blowups.values()))
    summary = (f"{len(bad)} taxonomy mismatches; nested {nested_01}/{nested_13}, "
               f"strict fractions {strict_01:.3f}/{strict_13:.3f}; blow-up points {blowups}")
    return SuiteResult("friction", ok, summary,
                       {"mismatches": bad, "strict_01": strict_01, "strict_13": strict_13,
                        "blowup_points": blowups})


# -- 5 -------------------------------------------------------------------------

def suite_density_friction(nu0: float = 0.3, target_delta: float = 0.3, t_end: float = 200.0,
                           grids=None) -> SuiteResult:
    """Friction nu0 * n^gamma: smooth for gamma >= 1, blow-up below, stable under refinement."""
    a = amplitude_for_delta(target_delta)
    grids = grids if grids is not None else [Grid1D(-10.0, 10.0, 1024), Grid1D(-10.0, 10.0, 2048)]
    expected = {0.25: "blow-up", 0.5: "blow-up", 1.0: "smooth", 1.5: "smooth", 2.0: "smooth"}
    rows = check_density_friction_threshold(a, nu0, list(expected), grids, t_end)
    wrong = [r.gamma for r in rows if not r.stable or r.verdict != expected[r.gamma]]
    table = "; ".join(f"g={r.gamma}: {r.verdict}" + (f" (t*~{min(t for t in r.t_stars.values() if t):.2f})"
                                                     if r.verdict == "blow-up" else "") for r in rows)
    return SuiteResult("density_friction", not wrong, f"a={a:.4f}; {table}",
                       {"a": a, "rows": [(r.gamma, r.verdicts, r.t_stars, r.admissible) for r in rows],
                        "wrong": wrong})


# -- 6 -------------------------------------------------------------------------

def suite_pressure(a: float | None = None, sizes=(512, 1024, 2048)) -> SuiteResult:
    """Equal critical amplitudes with and without pressure; weak vs catastrophic E singularity."""
    a0 = critical_amplitude(0.0)
    a1 = critical_amplitude(1.0, 2.0)
    rel = abs(a1 - a0) / a0
    a = a if a is not None else amplitude_for_delta(0.3)
    init = make_initial_data("laser_pulse", a=a)
    grids = [Grid1D(-10.0, 10.0, n) for n in sizes]
    # a captured shock saturates at grid scale, so a grid-relative trigger is used
    th = Thresholds(resolution=0.2)
    types = {}
    for alpha in (0.0, 1.0):
        reg = RegularizerSpec(alpha=alpha, gamma_p=2.0) if alpha else RegularizerSpec()
        run = solve(init, SolverConfig(grid=grids[0], t_end=8.0, reg=reg, thresholds=th))
        if not run.report.blew_up:
            types[alpha] = None
            continue
        types[alpha] = classify_singularity(run, grids)
    e0 = types[0.0].E if types[0.0] else "none"
    e1 = types[1.0].E if types[1.0] else "none"
    conclusive = all(t is not None and t.conclusive for t in types.values())
    ok = rel <= 0.01 and e0 == "catastrophe" and e1 == "weak" and conclusive
    return SuiteResult("pressure", ok,
                       f"a_crit {a0:.5f} vs {a1:.5f} (rel {rel:.1e}); E: alpha=0 {e0}, alpha=1 {e1}",
                       {"a_crit": (a0, a1), "types": {k: (v.V, v.n, v.E, v.slopes) if v else None
                                                      for k, v in types.items()}})


# -- 7 and 8 -------------------------------------------------------------------

AMPLITUDES = (0.6, 0.7, 0.8, 0.9, 1.0)


def _viscous_sweep(reg: RegularizerSpec, n_cells: int, t_end: float):
    grid = Grid1D(-10.0, 10.0, n_cells)
    out = []
    for a in AMPLITUDES:
        init = make_initial_data("laser_pulse", a=a)
        bare = solve(init, SolverConfig(grid=grid, t_end=10.0))
        reg_run = solve(init, SolverConfig(grid=grid, t_end=t_end, reg=reg))
        out.append((a, bare.report.blew_up, reg_run.report.blew_up, reg_run.final.t))
    return out


def cole_hopf_order(mu: float = 0.1, a: float = 0.6, sizes=(256, 512, 1024), t_end: float = 2.0):
    """Observed order of the Cole-Hopf residual under joint grid and snapshot refinement."""
    init = make_initial_data("laser_pulse", a=a)
    errs, hs = [], []
    for n in sizes:
        g = Grid1D(-10.0, 10.0, n)
        run = solve(init, SolverConfig(grid=g, t_end=t_end, output_dt=8.0 * g.spacing,
                                       reg=RegularizerSpec(mu=mu)))
        _, res = cole_hopf_residual(run, mu)
        errs.append(float(res.max()))
        hs.append(g.spacing)
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return order, errs


def suite_viscosity(mu: float = 0.1, n_cells: int = 512, t_end: float = 100.0) -> SuiteResult:
    """Viscosity keeps blow-up amplitudes smooth; Cole-Hopf residual converges."""
    rows = _viscous_sweep(RegularizerSpec(mu=mu), n_cells, t_end)
    order, errs = cole_hopf_order(mu)
    ok = all(b and not r for _, b, r, _ in rows) and order >= 1.0
    smooth = sum(1 for _, _, r, _ in rows if not r)
    return SuiteResult("viscosity", ok,
                       f"{smooth}/{len(rows)} smooth to t={t_end:g} (all blow up at mu=0: "
                       f"{all(b for _, b, _, _ in rows)}); Cole-Hopf order {order:.2f}",
                       {"rows": rows, "order": order, "residuals": errs})


def suite_viscosity_diffusion(mu: float = 0.1, kappa: float = 0.1, n_cells: int = 512, t_end: float = 100.0) -> SuiteResult:
    """Viscosity plus field diffusion keeps the same amplitudes smooth."""
    rows = _viscous_sweep(RegularizerSpec(mu=mu, kappa=kappa), n_cells, t_end)
    ok = all(b and not r for _, b, r, _ in rows)
    smooth = sum(1 for _, _, r, _ in rows if not r)
    return SuiteResult("viscosity_diffusion", ok, f"{smooth}/{len(rows)} smooth to t={t_end:g}", {"rows": rows})


# -- 9 -------------------------------------------------------------------------

def suite_stochastic(N: int = 100_000, sigmas=(0.4, 0.2, 0.1, 0.05), seed: int = 1,
                     bandwidth_ratio_max: float = 1.25) -> SuiteResult:
    """Mass, per-particle invariant, sigma convergence, and finiteness past blow-up."""
    grid = Grid1D(-10.0, 10.0, 800)
    init = make_initial_data("laser_pulse", a=0.3)
    ens0 = init_ensemble(init, plateau_density(7.0), N, 0.2, seed, grid)
    r0 = ens0.V ** 2 + ens0.E ** 2
    masses = []
    final = evolve(ens0, 2 * math.pi, 0.01, checkpoints=list(np.linspace(0.5, 2 * math.pi, 12)),
                   callback=lambda e: masses.append(estimate_moments(e, grid, 0.1).mass))
    mass_err = max(abs(m - 1.0) for m in masses)
    inv_err = float(np.max(np.abs(final.V ** 2 + final.E ** 2 - r0) / np.maximum(r0, 1e-300)))
    ok_a = mass_err <= 1e-3
    ok_b = inv_err <= 1e-12

    smooth_init = make_initial_data("gaussian_v", a=0.4, s=1.0)
    rows = convergence_study(smooth_init, sigmas, N, [math.pi], seed=seed)
    excess = [r.excess_V for r in sorted(rows, key=lambda r: -r.sigma)]
    ok_c = all(x > y for x, y in zip(excess, excess[1:]))

    blow_init = make_initial_data("laser_pulse", a=amplitude_for_delta(0.3))
    post = post_blowup_check(blow_init, 0.1, N, seed=seed)
    ratio = post["max_rho_half_bandwidth"] / post["max_rho"]
    ok_d = post["finite"] and ratio <= bandwidth_ratio_max
    ok = ok_a and ok_b and ok_c and ok_d
    summary = (f"(a) mass err {mass_err:.1e} {ok_a}; (b) invariant err {inv_err:.1e} {ok_b}; "
               f"(c) excess {['%.3g' % x for x in excess]} {ok_c}; "
               f"(d) finite {post['finite']}, rho ratio {ratio:.3f} {ok_d}")
    return SuiteResult("stochastic", ok, summary,
                       {"mass_err": mass_err, "invariant_err": inv_err, "excess_V": excess,
                        "rho_ratio": ratio, "t_star": post["t_star"]})


# -- 10 ------------------------------------------------------------------------

def _stochastic_digest(workers: int, N: int, sigma: float, seed: int, t_end: float) -> str:
    grid = Grid1D(-10.0, 10.0, 800)
    init = make_initial_data("laser_pulse", a=0.3)
    ens = init_ensemble(init, plateau_density(7.0), N, sigma, seed, grid)
    ens = evolve(ens, t_end, 0.01, workers=workers)
    m = estimate_moments(ens, grid, 0.1)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "ens.bin"
        save_checkpoint(ens, p)
        blob = p.read_bytes()
    h = hashlib.sha256(blob)
    for a in (m.rho, m.Vhat, m.Ehat):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def suite_determinism(N: int = 100_000, sigma: float = 0.1, seed: int = 7, t_end: float = 1.0) -> SuiteResult:
    """Repeated stochastic runs are byte-identical for any worker count."""
    digests = [_stochastic_digest(w, N, sigma, seed, t_end) for w in (1, 1, 4)]
    ok = len(set(digests)) == 1
    return SuiteResult("determinism", ok, f"{len(set(digests))} distinct digest(s) over 3 runs (workers 1,1,4)",
                       {"digests": digests})


SUITES = {
    "delta_sweep": suite_delta_sweep,
    "periodicity": suite_periodicity,
    "sign_invariance": suite_sign_invariance,
    "friction": suite_friction,
    "density_friction": suite_density_friction,
    "pressure": suite_pressure,
    "viscosity": suite_viscosity,
    "viscosity_diffusion": suite_viscosity_diffusion,
    "stochastic": suite_stochastic,
    "determinism": suite_determinism,
}


def run_suite(name: str, **kw) -> SuiteResult:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    res = SUITES[name](**kw)
    res.seconds = time.perf_counter() - t0
    return res


def run_suites(names=None, echo=print) -> list[SuiteResult]:
    out = []
    for name in names or list(SUITES):
        r = run_suite(name)
        if echo is not None:
            echo(r.line())
        out.append(r)
    return out
