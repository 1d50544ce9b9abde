"""Dynamics along characteristics, the blow-up criteria and the friction phase plane.

Along a characteristic dx/dt = V the system reduces to

    V' = -E - nu V,   E' = V,   v' = -e - v^2 - nu v,   e' = v (1 - e)

with (v, e) = (V_x, E_x). The (v, e) pair is closed, so smoothness of a
characteristic depends only on (v0, e0) and nu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .state import CharState, ConfigError, InitialData


class InvalidDensityError(ValueError):
    """e0 >= 1, i.e. non-positive initial density, where a criterion needs n > 0."""


class StiffnessError(RuntimeError):
    """Step size underflow without crossing the blow-up threshold."""


@dataclass(frozen=True)
class CharSystemKind:
    nu: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ConfigError(f"friction nu must be >= 0, got {self.nu}")

    @property
    def tag(self) -> str:
        return "original" if self.nu == 0 else f"friction({self.nu:g})"

    @classmethod
    def original(cls) -> "CharSystemKind":
        return cls(0.0)

    @classmethod
    def friction(cls, nu: float) -> "CharSystemKind":
        return cls(nu)


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    min_step: float = 1e-14
    first_step: float = 1e-3
    max_step: float = 0.1
    threshold: float = 1e8
    horizon: float = 50.0


@dataclass(frozen=True)
class BlowupReport:
    blew_up: bool
    t_star: float | None = None
    witness: str | None = None

    def __post_init__(self):
        if self.blew_up != (self.t_star is not None):
            raise ValueError("t_star must be present exactly when blew_up is set")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # columns x, V, E, v, e

    def state(self, i: int = -1) -> CharState:
        x, V, E, v, e = self.y[i]
        return CharState(float(self.t[i]), x, V, E, v, e)

    @property
    def delta(self) -> np.ndarray:
        return delta(self.y[:, 3], self.y[:, 4])


def delta(v0, e0):
    """Criterion v0^2 + 2 e0 - 1; the original system stays smooth iff this is < 0 everywhere."""
    return np.asarray(v0) ** 2 + 2.0 * np.asarray(e0) - 1.0


def delta_p(v0, e0, e0p, alpha: float, gamma: float):
    """Pressure criterion, returned as (lhs, rhs); smooth iff lhs < rhs at every point."""
    e0 = np.asarray(e0, dtype=float)
    if np.any(e0 >= 1.0):
        raise InvalidDensityError("criterion with pressure needs e0 < 1 (positive density)")
    if alpha < 0 or not gamma > 1:
        raise ConfigError("need alpha >= 0 and gamma > 1")
    lhs = delta(v0, e0)
    rhs = alpha * np.asarray(e0p, dtype=float) ** 2 / (1.0 - e0) ** (3.0 - gamma)
    return lhs, rhs


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_ERR = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _char_rhs(y: np.ndarray, nu: np.ndarray) -> np.ndarray:
    # y has shape (5, m): x, V, E, v, e
    _, V, E, v, e = y
    return np.stack([V, -E - nu * V, V, -e - v * v - nu * v, v * (1.0 - e)])


@dataclass
class BatchResult:
    blew_up: np.ndarray
    t_star: np.ndarray  # nan where smooth
    t_final: np.ndarray
    y_final: np.ndarray  # (m, 5)
    witness: np.ndarray  # "", "v", "e" or "v,e"
    history: list = field(default_factory=list)


def integrate_batch(nu, y0, t_end: float, opts: IntegratorOptions = IntegratorOptions(),
                    record: bool = False, on_step=None) -> BatchResult:
    """Integrate many characteristics at once, each with its own adaptive step.

    ``y0`` has shape (m, 5). ``nu`` is a scalar or an array of length m.
    Trajectories stop when |v| or |e| exceeds ``opts.threshold``; their
    blow-up time is estimated as t + 1/|v| (the leading-order pole).
    ``on_step(idx, t, y)`` is called after every accepted step with the
    active indices and their new (t, y) if given. With ``record`` the
    accepted steps of every trajectory are kept (meant for small m).
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    m = y0.shape[0]
    nu_all = np.broadcast_to(np.asarray(nu, dtype=float), (m,)).copy()
    if t_end <= 0:
        raise ConfigError("t_end must be positive")

    y = y0.T.copy()
    t = np.zeros(m)
    h = np.full(m, min(opts.first_step, t_end))
    active = np.arange(m)
    blew = np.zeros(m, bool)
    t_star = np.full(m, np.nan)
    witness = np.full(m, "", dtype=object)
    t_out = np.full(m, t_end)
    y_out = y0.copy()
    history = [[(0.0, y0[i].copy())] for i in range(m)] if record else []

    ya, ta, ha, nua = y, t, h, nu_all
    k1 = _char_rhs(ya, nua)
    while active.size:
        ha = np.minimum(ha, t_end - ta)
        ks = [k1]
        for s in range(1, 7):
            acc = ya + ha * sum(_A[s][j] * ks[j] for j in range(s))
            ks.append(_char_rhs(acc, nua))
        y_new = ya + ha * sum(_B[j] * ks[j] for j in range(7) if _B[j] != 0.0)
        err_vec = ha * sum(_B_ERR[j] * ks[j] for j in range(7))
        with np.errstate(invalid="ignore", over="ignore"):
            scale = opts.atol + opts.rtol * np.maximum(np.abs(ya), np.abs(y_new))
            err = np.max(np.abs(err_vec) / scale, axis=0)
        err = np.where(np.isfinite(err) & np.all(np.isfinite(y_new), axis=0), err, np.inf)
        ok = err <= 1.0

        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, 5.0, 0.9 * err ** -0.2)
        fac = np.clip(np.where(ok, fac, np.minimum(fac, 0.5)), 0.2, 5.0)
        h_next = np.minimum(ha * fac, opts.max_step)

        t_new = np.where(ok, ta + ha, ta)
        ya = np.where(ok, y_new, ya)
        k1 = np.where(ok, ks[6], k1)  # FSAL
        ta = t_new

        if record:
            for j in np.flatnonzero(ok):
                history[active[j]].append((float(ta[j]), ya[:, j].copy()))
        if on_step is not None and ok.any():
            on_step(active[ok], ta[ok], ya[:, ok])

        big_v = np.abs(ya[3]) > opts.threshold
        big_e = np.abs(ya[4]) > opts.threshold
        hit = ok & (big_v | big_e)
        done = hit | (ok & (ta >= t_end))
        stuck = ~ok & (h_next < opts.min_step)
        if stuck.any():
            j = np.flatnonzero(stuck)[0]
            raise StiffnessError(
                f"step underflow at t={ta[j]:.6g} for trajectory {active[j]} without threshold crossing")

        if done.any():
            idx = active[done]
            blew[idx] = hit[done]
            vv = np.abs(ya[3, done])
            with np.errstate(divide="ignore"):
                t_star[idx] = np.where(hit[done], ta[done] + 1.0 / np.maximum(vv, 1.0 / opts.threshold), np.nan)
            wv, we = big_v[done], big_e[done]
            witness[idx] = np.where(wv & we, "v,e", np.where(wv, "v", np.where(we, "e", "")))
            t_out[idx] = ta[done]
            y_out[idx] = ya[:, done].T
            keep = ~done
            active, ya, ta, nua, k1 = active[keep], ya[:, keep], ta[keep], nua[keep], k1[:, keep]
            h_next = h_next[keep]
        ha = h_next

    res = BatchResult(blew, t_star, t_out, y_out, witness)
    if record:
        res.history = history
    return res


def fit_blowup_time(t: np.ndarray, v: np.ndarray) -> float:
    """Least-squares fit of |v| ~ C / (t_star - t) on the last decade of growth.

    The fit is done in log-log form with t_star as the free parameter;
    log C is eliminated in closed form for each trial t_star.
    """
    t = np.asarray(t, float)
    a = np.abs(np.asarray(v, float))
    top = a[-1]
    sel = a >= top / 10.0
    # keep the contiguous tail of the growth
    start = len(a) - np.argmin(sel[::-1]) if not sel.all() else 0
    ts, lv = t[start:], np.log(a[start:])
    if ts.size < 3:
        return float(t[-1] + 1.0 / max(top, 1e-300))

    def cost(tau):
        r = lv + np.log(tau - ts)
        return float(np.sum((r - r.mean()) ** 2))

    guess = t[-1] + 1.0 / top
    lo = t[-1] + 1e-3 / top
    hi = t[-1] + 1e3 / top
    sol = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-6 / top})
    return float(sol.x) if sol.success else float(guess)


def integrate_characteristic(kind: CharSystemKind, init: CharState, t_end: float,
                             opts: IntegratorOptions = IntegratorOptions()) -> tuple[Trajectory, BlowupReport]:
    """Adaptive Dormand-Prince integration of one characteristic, all accepted steps kept."""
    res = integrate_batch(kind.nu, init.as_array()[None, :], t_end, opts, record=True)
    hist = res.history[0]
    ts = init.t + np.array([h[0] for h in hist])
    ys = np.array([h[1] for h in hist])
    traj = Trajectory(ts, ys)
    if not res.blew_up[0]:
        return traj, BlowupReport(False)
    w = res.witness[0]
    col = 3 if "v" in w else 4
    t_star = init.t + fit_blowup_time(ts - init.t, ys[:, col])
    return traj, BlowupReport(True, t_star, w)


def blowup_sweep(nu: float, v0, e0, t_end: float = 100.0,
                 opts: IntegratorOptions = IntegratorOptions(), chunk: int = 4096) -> BatchResult:
    """Blow-up verdicts for many (v0, e0) pairs; V and E start at 0 since they do not feed back."""
    v0 = np.ravel(np.asarray(v0, float))
    e0 = np.ravel(np.asarray(e0, float))
    y0 = np.zeros((v0.size, 5))
    y0[:, 3] = v0
    y0[:, 4] = e0
    parts = [integrate_batch(nu, y0[i:i + chunk], t_end, opts) for i in range(0, v0.size, chunk)]
    return BatchResult(
        np.concatenate([p.blew_up for p in parts]),
        np.concatenate([p.t_star for p in parts]),
        np.concatenate([p.t_final for p in parts]),
        np.concatenate([p.y_final for p in parts]),
        np.concatenate([p.witness for p in parts]),
    )


def smoothness_membership(nu: float, v0: float, e0: float,
                          opts: IntegratorOptions = IntegratorOptions()) -> bool:
    if nu < 0:
        raise ConfigError("nu must be >= 0")
    res = integrate_batch(nu, np.array([[0.0, 0.0, 0.0, v0, e0]]), opts.horizon, opts)
    return not bool(res.blew_up[0])


def lagrangian_map(init: InitialData, x0, t):
    """Closed-form flow of the original system before blow-up.

    Along a characteristic (V, E) rotates with unit frequency, so
    x(t) = x0 + V0 sin t + E0 (cos t - 1). Returns (x, V, E, jacobian dx/dx0).
    """
    x0 = np.asarray(x0, float)
    V0, E0 = init.V0(x0), init.E0(x0)
    v0, e0 = init.v0(x0), init.e0(x0)
    c, s = math.cos(t), math.sin(t)
    x = x0 + V0 * s + E0 * (c - 1.0)
    V = V0 * c - E0 * s
    E = V0 * s + E0 * c
    jac = 1.0 + v0 * s + e0 * (c - 1.0)
    return x, V, E, jac


def exact_blowup_time(v0, e0):
    """First t > 0 at which 1 + v0 sin t + e0 (cos t - 1) vanishes; inf if never.

    Closed form for the original system, used as an oracle.
    """
    v0 = np.asarray(v0, float)
    e0 = np.asarray(e0, float)
    # (1 - e0) + R cos(t - phi) = 0 with R cos phi = e0, R sin phi = v0
    R = np.hypot(v0, e0)
    phi = np.arctan2(v0, e0)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        ratio = -(1.0 - e0) / R
        base = np.arccos(np.clip(ratio, -1.0, 1.0))
    out = np.full(np.broadcast(v0, e0).shape, np.inf)
    can = (R > 0) & (np.abs(ratio) <= 1.0)
    # roots t = phi +- base (mod 2pi); take the smallest positive
    cands = np.stack([np.mod(phi + base, 2 * np.pi), np.mod(phi - base, 2 * np.pi)])
    cands = np.where(cands <= 1e-15, cands + 2 * np.pi, cands)
    out = np.where(can, cands.min(axis=0), out)
    # e0 >= 1 means the density starts non-positive: the Jacobian is already <= 0
    return np.where(e0 >= 1.0, np.where(e0 == 1.0, np.pi / 2, out), out)


# -- friction phase plane -----------------------------------------------------

KINDS = ("center", "stable_focus", "unstable_focus", "stable_node", "unstable_node", "saddle", "saddle_node")


@dataclass(frozen=True)
class Equilibrium:
    location: tuple[float, float]  # (e, v)
    kind: str
    eigenvalues: tuple[complex, complex]


def phase_jacobian(nu: float, e: float, v: float) -> np.ndarray:
    """Jacobian of (e', v') = (v (1 - e), -e - v^2 - nu v) in (e, v) order."""
    return np.array([[-v, 1.0 - e], [-1.0, -2.0 * v - nu]])


def kind_from_eigenvalues(lam, tol: float = 1e-9) -> str:
    """Generic linear classification of a planar equilibrium from its two eigenvalues."""
    l1, l2 = complex(lam[0]), complex(lam[1])
    if abs(l1.imag) > tol:
        if abs(l1.real) <= tol:
            return "center"
        return "stable_focus" if l1.real < 0 else "unstable_focus"
    r1, r2 = sorted([l1.real, l2.real])
    if abs(r1) <= tol or abs(r2) <= tol:
        return "saddle_node"
    if r1 < 0 < r2:
        return "saddle"
    return "stable_node" if r2 < 0 else "unstable_node"


def classify_equilibria(nu: float) -> list[Equilibrium]:
    """Equilibria of the friction (v, e) subsystem with their types.

    The kinds follow from the closed-form locations; eigenvalues come from
    the Jacobian so callers can cross-check.
    """
    if not (math.isfinite(nu) and nu >= 0):
        raise ConfigError("nu must be >= 0")

    def eq(e, v, kind):
        lam = np.linalg.eigvals(phase_jacobian(nu, e, v))
        lam = sorted(lam, key=lambda z: (z.real, z.imag))
        return Equilibrium((float(e), float(v)), kind, (complex(lam[0]), complex(lam[1])))

    if nu == 0:
        return [eq(0.0, 0.0, "center")]
    if nu < 2:
        return [eq(0.0, 0.0, "stable_focus")]
    if nu == 2:
        return [eq(0.0, 0.0, "stable_node"), eq(1.0, -1.0, "saddle_node")]
    s = math.sqrt(nu * nu - 4.0)
    return [
        eq(0.0, 0.0, "stable_node"),
        eq(1.0, -0.5 * (nu - s), "saddle"),
        eq(1.0, -0.5 * (nu + s), "unstable_node"),
    ]


@dataclass(frozen=True)
class SeparatrixOptions:
    n_rays: int = 360
    max_radius: float = 2.0 * math.sqrt(2.0)
    box: float = 2.0
    tol: float = 1e-4
    eps: float = 1e-6
    t_back: float = 20.0
    integrator: IntegratorOptions = IntegratorOptions(horizon=50.0)


@dataclass
class Separatrix:
    """Polylines in the (e, v) plane bounding the smoothness domain."""

    nu: float
    curves: list  # each an (k, 2) array of (e, v)
    method: str
    ray_angles: np.ndarray | None = None
    ray_radii: np.ndarray | None = None  # nan where no crossing inside the box

    @property
    def points(self) -> np.ndarray:
        return np.vstack(self.curves) if self.curves else np.empty((0, 2))


def _ray_limit(theta: float, box: float, rmax: float) -> float:
    c, s = math.cos(theta), math.sin(theta)
    lim = rmax
    for comp in (c, s):
        if abs(comp) > 1e-15:
            lim = min(lim, box / abs(comp))
    return lim


def _membership_many(nu, v, e, opts: IntegratorOptions) -> np.ndarray:
    res = blowup_sweep(nu, v, e, opts.horizon, opts)
    return ~res.blew_up


def trace_boundary_rays(nu: float, opts: SeparatrixOptions = SeparatrixOptions()) -> Separatrix:
    """Blow-up/smooth boundary by bisection on rays from the origin in the (v, e) plane.

    All rays are bisected together; each probe is a characteristic integration.
    Rays whose far end inside the box is still smooth get radius nan.
    """
    theta = np.linspace(-math.pi, math.pi, opts.n_rays, endpoint=False)
    rmax = np.array([_ray_limit(th, opts.box, opts.max_radius) for th in theta])
    cv, ce = np.cos(theta), np.sin(theta)  # ray direction in (v, e)
    if not _membership_many(nu, np.zeros(1), np.zeros(1), opts.integrator)[0]:
        raise ValueError("origin is not in the smoothness domain")
    far_ok = _membership_many(nu, rmax * cv, rmax * ce, opts.integrator)
    lo = np.zeros_like(rmax)
    hi = rmax.copy()
    todo = ~far_ok
    if not todo.any():
        raise ValueError(f"no blow-up/smooth bracket within radius {opts.max_radius} for nu={nu}")
    while True:
        width = np.where(todo, hi - lo, 0.0)
        if width.max() <= opts.tol:
            break
        mid = 0.5 * (lo + hi)
        sel = todo & (width > opts.tol)
        inside = _membership_many(nu, mid[sel] * cv[sel], mid[sel] * ce[sel], opts.integrator)
        idx = np.flatnonzero(sel)
        lo[idx[inside]] = mid[idx[inside]]
        hi[idx[~inside]] = mid[idx[~inside]]
    r = np.where(todo, 0.5 * (lo + hi), np.nan)
    pts = np.column_stack([r * ce, r * cv])[todo]  # (e, v)
    return Separatrix(nu, [pts], "rays", theta, r)


def _phase_rhs(nu):
    def f(_t, z):
        e, v = z
        return [v * (1.0 - e), -e - v * v - nu * v]
    return f


def trace_separatrix(nu: float, opts: SeparatrixOptions = SeparatrixOptions()) -> Separatrix:
    """Boundary of the smoothness domain in the (e, v) plane.

    For nu > 2 the saddle's stable manifold is followed backward in time from
    both sides of the saddle, and the ray bisection supplies the part of the
    boundary away from the line e = 1. For nu <= 2 only ray bisection is used.
    """
    if not (math.isfinite(nu) and nu >= 0):
        raise ConfigError("nu must be >= 0")
    rays = trace_boundary_rays(nu, opts)
    if nu <= 2:
        return rays
    from scipy.integrate import solve_ivp

    saddle = [q for q in classify_equilibria(nu) if q.kind == "saddle"][0]
    e_s, v_s = saddle.location
    w, vecs = np.linalg.eig(phase_jacobian(nu, e_s, v_s))
    stable = np.real(vecs[:, np.argmin(w.real)])
    box = opts.box
    curves = []
    for sign in (1.0, -1.0):
        z0 = np.array([e_s, v_s]) + sign * opts.eps * stable

        def leave(_t, z):
            return box + 0.5 - max(abs(z[0]), abs(z[1]))
        leave.terminal = True
        sol = solve_ivp(_phase_rhs(nu), (0.0, -opts.t_back), z0, rtol=1e-10, atol=1e-12,
                        events=leave, max_step=0.01)
        branch = sol.y.T[::-1] if sign > 0 else sol.y.T
        curves.append(branch)
    manifold = np.vstack([curves[0], np.array([[e_s, v_s]]), curves[1]])
    return Separatrix(nu, [manifold] + rays.curves, "stable-manifold+rays",
                      rays.ray_angles, rays.ray_radii)
