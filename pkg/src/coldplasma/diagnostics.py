"""Verification instruments: Cole-Hopf residual, periodicity, criterion reconciliation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .characteristics import InvalidDensityError, delta, delta_p
from .fields import RunResult, SolverConfig, solve
from .state import ConfigError, Grid1D, InitialData, RegularizerSpec, make_initial_data

BAND = 1e-2


def periodic_antiderivative(f: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Mean-zero spectral antiderivative of the zero-mean part of f."""
    n = grid.n_cells
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.spacing)
    fh = np.fft.rfft(f)
    out = np.zeros_like(fh)
    out[1:] = fh[1:] / (1j * k[1:])
    return np.fft.irfft(out, n)


def _cole_hopf_parts(V, E, grid, mu, psi_shift):
    U = periodic_antiderivative(V, grid)
    W = periodic_antiderivative(E, grid)
    # gauge: U and W have zero mean, which fixes the constant in the potential
    psi = (W - 0.5 * np.mean(V * V)) / (2.0 * mu) + psi_shift
    return -U / (2.0 * mu), psi


def cole_hopf_residual(run: RunResult, mu: float, psi_shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Relative residual of z_t = mu z_xx + Psi z between consecutive snapshots.

    z = exp(-U / (2 mu)) with U_x = V, and Psi = (W - <V^2>/2) / (2 mu)
    with W_x = E, both antiderivatives mean-zero on the periodic grid. The
    residual is evaluated at each snapshot midpoint (centred in time) and
    normalised by the RMS of z there. Returns (t_mid, residual).
    """
    reg = run.config.reg
    if not mu > 0 or reg.mu != mu or not replace(reg, mu=0.0).is_off or reg.exotic_viscosity:
        raise ConfigError("Cole-Hopf residual needs a run with plain viscosity mu > 0 only")
    states = run.states
    if len(states) < 2:
        raise ConfigError("need at least two snapshots")
    grid = states[0].grid
    h = grid.spacing
    ts, res = [], []
    for s0, s1 in zip(states[:-1], states[1:]):
        dt = s1.t - s0.t
        if dt <= 0:
            continue
        a0, p0 = _cole_hopf_parts(s0.V, s0.E, grid, mu, psi_shift)
        a1, p1 = _cole_hopf_parts(s1.V, s1.E, grid, mu, psi_shift)
        # common shift keeps exp() in range and leaves the linear equation intact
        shift = max(a0.max(), a1.max())
        if max(a0.max() - a0.min(), a1.max() - a1.min()) > 1400:
            raise OverflowError("U / (2 mu) spans too wide a range for exp even after rescaling")
        z0, z1 = np.exp(a0 - shift), np.exp(a1 - shift)
        lap0 = (np.roll(z0, -1) - 2 * z0 + np.roll(z0, 1)) / h ** 2
        lap1 = (np.roll(z1, -1) - 2 * z1 + np.roll(z1, 1)) / h ** 2
        r = (z1 - z0) / dt - 0.5 * (mu * lap0 + p0 * z0 + mu * lap1 + p1 * z1)
        zmid = 0.5 * (z0 + z1)
        ts.append(0.5 * (s0.t + s1.t))
        res.append(float(np.sqrt(np.mean(r * r)) / np.sqrt(np.mean(zmid * zmid))))
    return np.array(ts), np.array(res)


def periodicity_check(run: RunResult, period: float = 2.0 * math.pi) -> float:
    """Sup-norm distance between (V, E) at t = 2 pi and at t = 0."""
    if not run.config.reg.is_off:
        raise ConfigError("periodicity only holds without regularizing terms")
    s0 = run.states[0]
    try:
        s1 = run.state_at(s0.t + period, tol=1e-9 * max(1.0, period))
    except KeyError:
        raise ConfigError(f"run has no snapshot at t={s0.t + period:.6g}") from None
    return float(max(np.max(np.abs(s1.V - s0.V)), np.max(np.abs(s1.E - s0.E))))


@dataclass
class ReconciliationReport:
    x: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    criterion_blowup: np.ndarray  # per x: lhs >= rhs
    boundary_band: np.ndarray  # per x: |lhs - rhs| < BAND
    predicted_blowup: bool
    solver_blowup: bool
    solver_t_star: float | None
    solver_witness: str | None
    in_band: bool  # the decisive point sits inside the band
    argmax_x: float
    margin: float  # max_x (lhs - rhs)
    criterion: str

    @property
    def agreement(self) -> bool:
        return self.predicted_blowup == self.solver_blowup

    @property
    def failure(self) -> bool:
        """Disagreement outside the boundary band."""
        return not self.agreement and not self.in_band

    def summary(self) -> dict:
        return {
            "criterion": self.criterion,
            "predicted_blowup": self.predicted_blowup,
            "solver_blowup": self.solver_blowup,
            "solver_t_star": self.solver_t_star,
            "solver_witness": self.solver_witness,
            "agreement": self.agreement,
            "in_band": self.in_band,
            "argmax_x": self.argmax_x,
            "margin": self.margin,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def criterion_table(init: InitialData, reg: RegularizerSpec, x: np.ndarray):
    """Pointwise (lhs, rhs, name) for the criterion matching ``reg``."""
    if reg.is_off:
        lhs = delta(init.v0(x), init.e0(x))
        return lhs, np.zeros_like(lhs), "delta"
    only_pressure = replace(reg, alpha=0.0).is_off
    if only_pressure and reg.alpha > 0:
        lhs, rhs = delta_p(init.v0(x), init.e0(x), init.e0p(x), reg.alpha, reg.gamma_p)
        return lhs, rhs, "delta_p"
    raise ConfigError("reconciliation is defined for the unregularized or pressure-only system")


def reconcile_criterion(init: InitialData, reg: RegularizerSpec, grid: Grid1D,
                        t_end: float = 100.0, cfg: SolverConfig | None = None) -> ReconciliationReport:
    """Compare the pointwise criterion with the verdict of the field solver."""
    x = grid.x
    lhs, rhs, name = criterion_table(init, reg, x)
    gap = lhs - rhs
    i = int(np.argmax(gap))
    cfg = cfg if cfg is not None else SolverConfig(grid=grid, t_end=t_end, reg=reg)
    cfg = replace(cfg, grid=grid, reg=reg, t_end=t_end)
    run = solve(init, cfg)
    return ReconciliationReport(
        x=x, lhs=lhs, rhs=rhs, criterion_blowup=gap >= 0, boundary_band=np.abs(gap) < BAND,
        predicted_blowup=bool(gap.max() >= 0), solver_blowup=run.report.blew_up,
        solver_t_star=run.report.t_star, solver_witness=run.report.witness,
        in_band=bool(abs(gap[i]) < BAND), argmax_x=float(x[i]), margin=float(gap[i]), criterion=name)


def critical_amplitude(alpha: float = 0.0, gamma: float = 2.0, preset: str = "laser_pulse",
                       lo: float = 1e-3, hi: float = 1.0, tol: float = 1e-8,
                       x: np.ndarray | None = None, **params) -> float:
    """Smallest amplitude a at which the criterion fails somewhere, by bisection.

    Uses Delta for alpha = 0 and the pressure criterion otherwise.
    """
    x = np.linspace(-10, 10, 200_001) if x is None else x
    reg = RegularizerSpec(alpha=alpha, gamma_p=gamma) if alpha > 0 else RegularizerSpec()

    def fails(a):
        try:
            lhs, rhs, _ = criterion_table(make_initial_data(preset, a=a, **params), reg, x)
        except InvalidDensityError:
            return True  # non-positive initial density is already past the threshold
        return bool(np.max(lhs - rhs) >= 0)

    if fails(lo) or not fails(hi):
        raise ValueError(f"criterion does not change verdict on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fails(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def amplitude_for_delta(target: float, preset: str = "laser_pulse", x=None, **params) -> float:
    """Amplitude at which max_x Delta equals ``target`` (bisection on a)."""
    x = np.linspace(-10, 10, 200_001) if x is None else x

    def g(a):
        d = make_initial_data(preset, a=a, **params)
        return float(np.max(delta(d.v0(x), d.e0(x)))) - target

    lo, hi = 1e-6, 1.0
    while g(hi) < 0:
        hi *= 2
        if hi > 1e3:
            raise ValueError("target not reachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def text_table(rows, headers) -> str:
    """Aligned plain-text table."""
    cells = [[str(h) for h in headers]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(c):
    if isinstance(c, float):
        return f"{c:.6g}"
    return str(c)
