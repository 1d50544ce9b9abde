"""Method-of-lines solver for the (V, E) system with optional regularizing terms.

    V_t + V V_x = -E - nu(n) V - alpha n^(gamma-2) n_x + mu V_xx   [or mu (V_x/n)_x]
    E_t + V E_x = V + kappa E_xx,          n = 1 - E_x

Periodic grid, RK4 in time. Density is always rebuilt from E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .characteristics import BlowupReport, fit_blowup_time
from .state import (ConfigError, FieldState, Grid1D, InitialData, RegularizerSpec, make_initial_data,
                    ddx, d2dx2, reconstruct_density)


class DensityBreakdown(ArithmeticError):
    """n <= 0 while a term that divides by or raises n to a power is active."""


class NumericalBreakdown(ArithmeticError):
    """NaN or Inf appeared in the state; ``last_state`` is the last finite one."""

    def __init__(self, msg, last_state: FieldState | None = None):
        super().__init__(msg)
        self.last_state = last_state


@dataclass(frozen=True)
class Thresholds:
    """Blow-up triggers.

    ``vx_factor``, ``n_min`` and ``n_max`` are absolute. ``resolution`` is
    grid-relative: it fires once the steepest V front spans about
    1/resolution cells of the field amplitude, i.e. once
    max|V_x| * h > resolution * (max|V| + max|E|). On a fixed grid a true
    gradient catastrophe saturates near that level, long before any
    absolute threshold, so this is the trigger that actually fires.
    """

    vx_factor: float = 1e4
    n_min: float = 1e-6
    n_max: float = 1e6
    resolution: float | None = None


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid1D = Grid1D()
    t_end: float = 10.0
    cfl: float = 0.4
    output_dt: float | None = None  # None: only initial and final states
    reg: RegularizerSpec = RegularizerSpec()
    scheme: str = "central"  # or "upwind"
    filter_order: int = 16
    filter_strength: float = 36.0
    thresholds: Thresholds = Thresholds()
    halt_on_blowup: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ConfigError("cfl must lie in (0, 1)")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.scheme not in ("upwind", "central"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.output_dt is not None and not self.output_dt > 0:
            raise ConfigError("output_dt must be positive")


@dataclass
class RunResult:
    states: list
    report: BlowupReport
    t: np.ndarray
    max_vx: np.ndarray
    max_nx: np.ndarray
    max_ex: np.ndarray
    min_n: np.ndarray
    max_n: np.ndarray
    config: SolverConfig
    steps: int = 0
    detected_at: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> FieldState:
        return self.states[-1]

    def state_at(self, t: float, tol: float = 1e-9) -> FieldState:
        for s in self.states:
            if abs(s.t - t) <= tol:
                return s
        raise KeyError(f"no snapshot at t={t}")


def _upwind_grad(f, vel, h):
    back = (f - np.roll(f, 1)) / h
    fwd = (np.roll(f, -1) - f) / h
    return np.where(vel > 0, back, fwd)


def friction_coefficient(n: np.ndarray, reg: RegularizerSpec):
    nu = reg.nu_const
    if reg.nu_density is not None:
        nu0, g = reg.nu_density
        nu = nu + nu0 * n ** g
    return nu


def rhs(V: np.ndarray, E: np.ndarray, reg: RegularizerSpec, grid: Grid1D,
        scheme: str = "central") -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (V_t, E_t) of the semi-discrete system."""
    h = grid.spacing
    if scheme == "upwind":
        Vx_adv = _upwind_grad(V, V, h)
        Ex_adv = _upwind_grad(E, V, h)
    else:
        Vx_adv = ddx(V, h)
        Ex_adv = ddx(E, h)
    dV = -V * Vx_adv - E
    dE = -V * Ex_adv + V

    n = None
    if reg.needs_positive_density():
        n = reconstruct_density(E, grid)
        if np.any(n <= 0):
            raise DensityBreakdown(f"min n = {n.min():.3g} <= 0")

    if reg.nu_const > 0 or reg.nu_density is not None:
        if n is None:
            n = reconstruct_density(E, grid)
        dV -= friction_coefficient(n, reg) * V

    if reg.alpha > 0:
        if reg.pressure_form == "laplacian_e":
            dV += reg.alpha * d2dx2(E, h)
        else:
            # (1/n) d/dx (n^g / g) = n^(g-2) n_x; n_x from face densities
            # n_{i+1/2} = 1 - (E_{i+1} - E_i)/h, so it is the compact -E_xx
            nx = -d2dx2(E, h)
            dV -= reg.alpha * n ** (reg.gamma_p - 2.0) * nx

    if reg.mu > 0:
        if reg.exotic_viscosity:
            Vx_face = (np.roll(V, -1) - V) / h
            n_face = 1.0 - (np.roll(E, -1) - E) / h
            if np.any(n_face <= 0):
                raise DensityBreakdown(f"face density {n_face.min():.3g} <= 0")
            q = Vx_face / n_face
            dV += reg.mu * (q - np.roll(q, 1)) / h
        else:
            dV += reg.mu * d2dx2(V, h)
    if reg.kappa > 0:
        dE += reg.kappa * d2dx2(E, h)
    return dV, dE


def rhs_state(state: FieldState, reg: RegularizerSpec, scheme: str = "central"):
    return rhs(state.V, state.E, reg, state.grid, scheme)


def stable_dt(V, E, cfg: SolverConfig) -> float:
    """Explicit step from the advective/acoustic CFL and the diffusion limit."""
    reg, h = cfg.reg, cfg.grid.spacing
    speed = float(np.max(np.abs(V))) + 1.0
    if reg.alpha > 0:
        n = reconstruct_density(E, cfg.grid)
        if np.any(n <= 0):
            raise DensityBreakdown("non-positive density")
        speed += math.sqrt(reg.alpha * float(np.max(n ** (reg.gamma_p - 1.0))))
    dt = cfg.cfl * h / speed
    diff = max(reg.mu, reg.kappa)
    if reg.exotic_viscosity:
        n_face = 1.0 - (np.roll(E, -1) - E) / h
        nmin = float(n_face.min())
        if nmin <= 0:
            raise DensityBreakdown("non-positive face density")
        diff = max(reg.mu / nmin, reg.kappa)
    if diff > 0:
        dt = min(dt, cfg.cfl * h * h / (2.0 * diff))
    return dt


def _filter_weights(n: int, order: int, strength: float) -> np.ndarray:
    k = np.fft.rfftfreq(n) * 2.0  # 0 .. 1
    return np.exp(-strength * k ** order)


def _diagnostics(V, E, grid):
    h = grid.spacing
    n = reconstruct_density(E, grid)
    return (float(np.max(np.abs(ddx(V, h)))), float(np.max(np.abs(ddx(n, h)))),
            float(np.max(np.abs(ddx(E, h)))), float(n.min()), float(n.max()))


def solve(init: InitialData | FieldState, cfg: SolverConfig) -> RunResult:
    """Integrate from ``init`` to ``cfg.t_end`` or until a blow-up trigger fires.

    Diagnostics (max|V_x|, max|n_x|, max|E_x|, min n, max n) are recorded
    after every step; snapshots are taken every ``cfg.output_dt`` and at
    the end. A density breakdown in a term that needs n > 0 is reported as
    blow-up with witness "n<=0".
    """
    grid = cfg.grid
    state0 = init.sample(grid) if isinstance(init, InitialData) else init
    if isinstance(init, InitialData):
        edge = max(abs(state0.V[0]), abs(state0.E[0]), abs(state0.V[-1]), abs(state0.E[-1]))
        if edge > 1e-10:
            raise ConfigError(f"initial data is {edge:.2e} at the domain edge; widen the grid")
    V, E = state0.V.astype(float).copy(), state0.E.astype(float).copy()
    t = float(state0.t)
    reg, th = cfg.reg, cfg.thresholds
    h = grid.spacing
    filt = _filter_weights(grid.n_cells, cfg.filter_order, cfg.filter_strength) if cfg.scheme == "central" else None

    d0 = _diagnostics(V, E, grid)
    vx_limit = th.vx_factor * (d0[0] + 1.0)
    ts, series = [t], [d0]
    states = [FieldState(t, V.copy(), E.copy(), grid)]
    next_out = t + cfg.output_dt if cfg.output_dt else math.inf
    t_end = state0.t + cfg.t_end if isinstance(init, FieldState) else cfg.t_end
    witness = None
    detected = None
    steps = 0

    def f(Vs, Es):
        return rhs(Vs, Es, reg, grid, cfg.scheme)

    while t < t_end - 1e-12 * max(1.0, t_end):
        try:
            dt = stable_dt(V, E, cfg)
            dt = min(dt, t_end - t, next_out - t)
            k1v, k1e = f(V, E)
            k2v, k2e = f(V + 0.5 * dt * k1v, E + 0.5 * dt * k1e)
            k3v, k3e = f(V + 0.5 * dt * k2v, E + 0.5 * dt * k2e)
            k4v, k4e = f(V + dt * k3v, E + dt * k3e)
        except DensityBreakdown:
            witness = "n<=0"
            detected = t
            break
        Vn = V + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        En = E + dt / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e)
        if filt is not None:
            Vn = np.fft.irfft(np.fft.rfft(Vn) * filt, grid.n_cells)
            En = np.fft.irfft(np.fft.rfft(En) * filt, grid.n_cells)
        if not (np.all(np.isfinite(Vn)) and np.all(np.isfinite(En))):
            raise NumericalBreakdown(f"non-finite state at t={t + dt:.6g}",
                                     FieldState(t, V.copy(), E.copy(), grid))
        V, E = Vn, En
        t = t + dt
        steps += 1
        if abs(t - next_out) <= 1e-12 * max(1.0, t):
            t = next_out
        d = _diagnostics(V, E, grid)
        ts.append(t)
        series.append(d)
        if t >= next_out:
            states.append(FieldState(t, V.copy(), E.copy(), grid))
            next_out += cfg.output_dt

        if witness is None:
            amp = float(np.max(np.abs(V)) + np.max(np.abs(E)))
            if d[0] > vx_limit:
                witness = "V_x"
            elif th.resolution is not None and d[0] * h > th.resolution * max(amp, 1e-300) and amp > 1e-8:
                witness = "V_x(resolution)"
            elif d[3] < th.n_min:
                witness = "n_min"
            elif d[4] > th.n_max:
                witness = "n_max"
            if witness is not None:
                detected = t
                if cfg.halt_on_blowup:
                    break
        if steps >= cfg.max_steps:
            raise RuntimeError(f"max_steps={cfg.max_steps} reached at t={t:.6g}")

    if states[-1].t != t:
        states.append(FieldState(t, V.copy(), E.copy(), grid))
    arr = np.array(series)
    tarr = np.array(ts)
    if witness is None:
        report = BlowupReport(False)
    else:
        report = BlowupReport(True, _growth_fit(tarr, arr[:, 0], detected), witness)
    return RunResult(states, report, tarr, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                     cfg, steps, detected)


def _growth_fit(t, vx, detected):
    """Blow-up time from a pole fit to max|V_x| up to the detection time."""
    sel = t <= detected + 1e-12
    t, vx = t[sel], vx[sel]
    if t.size < 4 or vx[-1] <= 2.0 * max(vx[0], 1e-12):
        return float(detected)
    # on a grid the growth saturates; fit where it is still steep
    est = fit_blowup_time(t, vx)
    return float(max(min(est, detected + (detected - t[0])), t[0]))


def run_is_smooth(init: InitialData, cfg: SolverConfig) -> bool:
    return not solve(init, cfg).report.blew_up


def with_reg(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, reg=replace(cfg.reg, **kw))


# -- experiments built on the solver -----------------------------------------

def power_law_admissibility(gamma: float) -> dict:
    """The two growth conditions on f(eta) = eta**gamma, evaluated symbolically.

    Returns the limit of eta f'/f at infinity and whether the integral of
    f/eta^2 from 1 to infinity diverges.
    """
    import sympy as sp

    eta = sp.symbols("eta", positive=True)
    g = sp.nsimplify(gamma)
    f = eta ** g
    lim = sp.limit(eta * sp.diff(f, eta) / f, eta, sp.oo)
    integral = sp.integrate(f / eta ** 2, (eta, 1, sp.oo))
    diverges = bool(integral == sp.oo)
    finite_limit = bool(lim.is_finite)
    return {"gamma": gamma, "limit": float(lim) if finite_limit else math.inf,
            "integral_diverges": diverges, "admissible": finite_limit and diverges}


@dataclass
class ThresholdRow:
    gamma: float
    admissible: bool
    limit: float
    integral_diverges: bool
    verdicts: dict  # n_cells -> "smooth" | "blow-up"
    t_stars: dict

    @property
    def stable(self) -> bool:
        return len(set(self.verdicts.values())) == 1

    @property
    def verdict(self) -> str:
        vals = set(self.verdicts.values())
        return vals.pop() if len(vals) == 1 else "unstable"


def check_density_friction_threshold(a: float, nu0: float, gammas, grids=None, t_end: float = 200.0,
                                     preset: str = "laser_pulse", cfg: SolverConfig | None = None,
                                     **params) -> list[ThresholdRow]:
    """Solve with friction nu0 * n**gamma for each gamma and grid; tabulate verdicts."""
    from .characteristics import delta

    init = make_initial_data(preset, a=a, **params)
    xs = np.linspace(-20, 20, 400_001)
    if np.max(delta(init.v0(xs), init.e0(xs))) < 0:
        raise ConfigError("amplitude is subcritical: the unregularized run would stay smooth")
    grids = grids if grids is not None else [Grid1D(-10.0, 10.0, 1024), Grid1D(-10.0, 10.0, 2048)]
    base = cfg if cfg is not None else SolverConfig()
    rows = []
    for g in gammas:
        adm = power_law_admissibility(g)
        verdicts, t_stars = {}, {}
        for grid in grids:
            c = replace(base, grid=grid, t_end=t_end, reg=RegularizerSpec(nu_density=(nu0, g)))
            r = solve(init, c)
            verdicts[grid.n_cells] = "blow-up" if r.report.blew_up else "smooth"
            t_stars[grid.n_cells] = r.report.t_star
        rows.append(ThresholdRow(g, adm["admissible"], adm["limit"], adm["integral_diverges"], verdicts, t_stars))
    return rows


@dataclass
class SingularityType:
    V: str  # "catastrophe" | "bounded"
    n: str  # "strong" | "catastrophe" | "bounded"
    E: str  # "jump" | "catastrophe" | "weak" | "smooth"
    t_probe: float
    t_stars: list
    slopes: dict
    metrics: dict
    conclusive: bool = True


def _refinement_slope(hs, values):
    hs, values = np.asarray(hs, float), np.asarray(values, float)
    return float(np.polyfit(np.log(1.0 / hs), np.log(np.maximum(values, 1e-300)), 1)[0])


def classify_singularity(run: RunResult, refinements, growth: float = 1.0 / 3.0,
                         probe_fraction: float = 1.0) -> SingularityType:
    """Type of the singularity a blown-up run is heading for, from a refinement study.

    Each grid in ``refinements`` is run with the same configuration to find
    its detection time; all grids are then re-run to a common probe time
    (``probe_fraction`` times the detection time on the finest grid) and the growth rate of
    each indicator with 1/h is measured. A log-log slope above ``growth``
    counts as unbounded. Indicators: max|V_x| for V; max n and max|n_x| for
    n; the largest one-cell increment of E and max|E_x| for E.
    """
    if not run.report.blew_up:
        raise ConfigError("classify_singularity needs a run that blew up")
    init_state = run.states[0]
    base = run.config
    grids = list(refinements)
    if len(grids) < 2:
        raise ConfigError("need at least two grids")

    def sample(grid):
        # re-sample the initial state on a new grid via spectral interpolation
        return _resample(init_state, grid)

    detect = []
    for g in grids:
        r = solve(sample(g), replace(base, grid=g, halt_on_blowup=True, output_dt=None))
        if not r.report.blew_up:
            return SingularityType("bounded", "bounded", "smooth", math.nan, detect, {}, {}, conclusive=False)
        detect.append(r.detected_at)
    conclusive = max(detect) <= 1.2 * min(detect)
    # the finest grid resolves the singularity latest for shocks and best for catastrophes
    t_probe = probe_fraction * detect[int(np.argmin([g.spacing for g in grids]))]
    hs, m = [], {"max_vx": [], "max_n": [], "max_nx": [], "max_ex": [], "e_jump": []}
    for g in grids:
        r = solve(sample(g), replace(base, grid=g, t_end=t_probe, halt_on_blowup=False, output_dt=None))
        s = r.final
        hs.append(g.spacing)
        n = s.n
        m["max_vx"].append(float(np.max(np.abs(ddx(s.V, g.spacing)))))
        m["max_n"].append(float(n.max()))
        m["max_nx"].append(float(np.max(np.abs(ddx(n, g.spacing)))))
        m["max_ex"].append(float(np.max(np.abs(ddx(s.E, g.spacing)))))
        m["e_jump"].append(float(np.max(np.abs(np.roll(s.E, -1) - s.E))))
    slopes = {k: _refinement_slope(hs, v) for k, v in m.items()}
    V_type = "catastrophe" if slopes["max_vx"] > growth else "bounded"
    if slopes["max_n"] > growth:
        n_type = "strong"
    elif slopes["max_nx"] > growth:
        n_type = "catastrophe"
    else:
        n_type = "bounded"
    # one-cell increments of a discontinuous E do not shrink under refinement
    if slopes["e_jump"] > -0.1:
        E_type = "jump"
    elif slopes["max_ex"] > growth:
        E_type = "catastrophe"
    elif slopes["max_nx"] > growth:
        E_type = "weak"
    else:
        E_type = "smooth"
    return SingularityType(V_type, n_type, E_type, t_probe, detect, slopes, m, conclusive)


def _resample(state: FieldState, grid: Grid1D) -> FieldState:
    if state.grid == grid:
        return state
    if (state.grid.x_min, state.grid.x_max) != (grid.x_min, grid.x_max):
        raise ConfigError("refinements must cover the same interval")

    def interp(f):
        n0, n1 = state.grid.n_cells, grid.n_cells
        fh = np.fft.rfft(f)
        out = np.zeros(n1 // 2 + 1, dtype=complex)
        k = min(len(fh), len(out))
        out[:k] = fh[:k]
        return np.fft.irfft(out, n1) * (n1 / n0)

    return FieldState(state.t, interp(state.V), interp(state.E), grid)


def exotic_viscosity_indicator(run: RunResult, threshold: float = 1e4):
    """min over x of V_x / n at every snapshot; returns (t, series, crossed)."""
    if not run.config.reg.exotic_viscosity:
        raise ConfigError("run was made without the exotic viscosity term")
    ts, vals = [], []
    for s in run.states:
        h = s.grid.spacing
        n = s.n
        with np.errstate(divide="ignore", invalid="ignore"):
            q = ddx(s.V, h) / n
        ts.append(s.t)
        vals.append(float(np.min(q)) if np.all(n > 0) else -math.inf)
    vals = np.array(vals)
    return np.array(ts), vals, bool(np.any(vals < -threshold))


# -- output -------------------------------------------------------------------

def write_snapshots(run: RunResult, outdir, run_id: str = "run") -> list:
    """One CSV per snapshot, named {run_id}_{t_index}.csv, columns t, x, V, E, n."""
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, s in enumerate(run.states):
        p = out / f"{run_id}_{k}.csv"
        data = np.column_stack([np.full(s.grid.n_cells, s.t), s.grid.x, s.V, s.E, s.n])
        np.savetxt(p, data, delimiter=",", header="t,x,V,E,n", comments="", fmt="%.17g")
        paths.append(p)
    return paths


def run_to_json(run: RunResult) -> dict:
    """Structured summary of a run (report, configuration and diagnostic series)."""
    from dataclasses import asdict

    return {
        "report": asdict(run.report),
        "detected_at": run.detected_at,
        "steps": run.steps,
        "config": _jsonable(asdict(run.config)),
        "series": {"t": run.t.tolist(), "max_vx": run.max_vx.tolist(), "max_nx": run.max_nx.tolist(),
                   "max_ex": run.max_ex.tolist(), "min_n": run.min_n.tolist()},
    }


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    return d
