"""Stochastic characteristics and their kernel moment fields.

Each particle carries (X, V, E). Along a path (V, E) rotates with unit
frequency and X is driven by V plus additive noise:

    dX = V dt + sigma dW,    d(V, E) = Q (V, E) dt,   Q = [[0, -1], [1, 0]].

The density rho and the conditional means Vhat, Ehat are estimated from
the particles with a Gaussian kernel.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .characteristics import delta, exact_blowup_time, lagrangian_map
from .state import ConfigError, Grid1D, InitialData

BLOCK = 4096
_HEADER = struct.Struct("<qdQdQ")  # N, sigma, seed, t, step


@dataclass(frozen=True)
class ParticleEnsemble:
    X: np.ndarray
    V: np.ndarray
    E: np.ndarray
    sigma: float
    seed: int
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        if not (len(self.X) == len(self.V) == len(self.E)):
            raise ConfigError("particle arrays must have equal length")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ConfigError("sigma must be a finite non-negative number")
        for a in (self.X, self.V, self.E):
            a.flags.writeable = False

    @property
    def N(self) -> int:
        return len(self.X)


def _uniform_block(seed: int, block: int, step: int, size: int, stream: int = 0) -> np.ndarray:
    """Deterministic uniforms in (0, 1] for one particle block at one step."""
    bg = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, stream], counter=[0, 0, block, step])
    raw = bg.random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def _normal_block(seed: int, block: int, step: int, size: int) -> np.ndarray:
    u = _uniform_block(seed, block, step, 2 * size, stream=1)
    # Box-Muller, one normal per pair of uniforms
    return np.sqrt(-2.0 * np.log(u[:size])) * np.cos(2.0 * np.pi * u[size:])


def standard_normals(seed: int, step: int, n: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
    """Normals for particles [lo, hi) at a given step; lo must be block aligned."""
    hi = n if hi is None else hi
    if lo % BLOCK:
        raise ValueError("lo must be a multiple of BLOCK")
    out = []
    for b in range(lo // BLOCK, (hi + BLOCK - 1) // BLOCK):
        size = min(BLOCK, n - b * BLOCK)
        out.append(_normal_block(seed, b, step, size))
    z = np.concatenate(out) if out else np.empty(0)
    return z[: hi - lo]


def _inverse_cdf_sample(f0, grid: Grid1D, u: np.ndarray) -> np.ndarray:
    x = grid.x
    dens = np.asarray(f0(x) if callable(f0) else f0, dtype=float)
    if dens.shape != x.shape or not np.all(np.isfinite(dens)) or np.any(dens < 0):
        raise ConfigError("f0 must be finite, non-negative and sampled on the grid")
    h = grid.spacing
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * h)])
    total = cdf[-1]
    if not total > 0:
        raise ConfigError("f0 cannot be normalized (zero mass)")
    if abs(total - 1.0) > 1e-3:
        raise ConfigError(f"f0 integrates to {total:.6g}, expected 1")
    cdf /= total
    # strictly increasing support for interpolation
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(u, cdf[keep], x[keep])


def init_ensemble(init: InitialData, f0, N: int, sigma: float, seed: int,
                  grid: Grid1D = Grid1D()) -> ParticleEnsemble:
    """Positions drawn from f0 by inverse CDF; V and E set exactly to V0(X), E0(X)."""
    if N < 1000:
        raise ConfigError("need at least 1000 particles")
    u = np.concatenate([_uniform_block(seed, b, 0, min(BLOCK, N - b * BLOCK), stream=2)
                        for b in range((N + BLOCK - 1) // BLOCK)])
    # (0, 1] -> [0, 1)
    X = _inverse_cdf_sample(f0, grid, 1.0 - u)
    return ParticleEnsemble(X, np.asarray(init.V0(X), float), np.asarray(init.E0(X), float),
                            float(sigma), int(seed))


def uniform_density(half_width: float):
    def f0(x):
        return np.where(np.abs(x) <= half_width, 0.5 / half_width, 0.0)
    return f0


def plateau_density(half_width: float, edge: float = 0.25):
    """Flat top on |x| < half_width with tanh shoulders; unit mass exactly."""
    def f0(x):
        return (np.tanh((x + half_width) / edge) - np.tanh((x - half_width) / edge)) / (4.0 * half_width)
    return f0


def gaussian_density(width: float, center: float = 0.0):
    def f0(x):
        return np.exp(-0.5 * ((x - center) / width) ** 2) / (width * math.sqrt(2 * math.pi))
    return f0


def step_ensemble(ens: ParticleEnsemble, dt: float, workers: int = 1) -> ParticleEnsemble:
    """One Euler-Maruyama step for X and an exact rotation of (V, E)."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    N = ens.N
    c, s = math.cos(dt), math.sin(dt)
    sq = ens.sigma * math.sqrt(dt)
    Xn = np.empty(N)
    Vn = np.empty(N)
    En = np.empty(N)

    def work(b0, b1):
        lo, hi = b0 * BLOCK, min(b1 * BLOCK, N)
        X, V, E = ens.X[lo:hi], ens.V[lo:hi], ens.E[lo:hi]
        noise = standard_normals(ens.seed, ens.step + 1, N, lo, hi) if sq > 0 else 0.0
        Xn[lo:hi] = X + V * dt + sq * noise
        Vn[lo:hi] = V * c - E * s
        En[lo:hi] = V * s + E * c

    n_blocks = (N + BLOCK - 1) // BLOCK
    if workers <= 1 or n_blocks == 1:
        work(0, n_blocks)
    else:
        edges = np.linspace(0, n_blocks, min(workers, n_blocks) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ab: work(*ab), zip(edges[:-1], edges[1:])))
    return ParticleEnsemble(Xn, Vn, En, ens.sigma, ens.seed, ens.t + dt, ens.step + 1)


def evolve(ens: ParticleEnsemble, t_end: float, dt: float, workers: int = 1,
           checkpoints=(), callback=None) -> ParticleEnsemble:
    """Fixed-step evolution to t_end, landing exactly on each checkpoint time.

    ``callback(ens)`` is called at every checkpoint.
    """
    stops = sorted(t for t in checkpoints if ens.t < t <= t_end + 1e-12)
    if not stops or stops[-1] < t_end - 1e-12:
        stops.append(t_end)
    for stop in stops:
        n = max(1, int(math.ceil((stop - ens.t) / dt - 1e-9)))
        h = (stop - ens.t) / n
        for _ in range(n):
            ens = step_ensemble(ens, h, workers)
        ens = replace(ens, t=stop)
        if callback is not None and stop in checkpoints:
            callback(ens)
    return ens


@dataclass(frozen=True)
class MomentFields:
    grid: Grid1D
    t: float
    rho: np.ndarray
    Vhat: np.ndarray  # nan where rho is below the floor
    Ehat: np.ndarray
    bandwidth: float
    flux_V: np.ndarray  # rho * Vhat, defined everywhere
    flux_E: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.rho) * self.grid.spacing)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.Vhat)


def silverman_bandwidth(X: np.ndarray) -> float:
    X = np.asarray(X, float)
    std = float(np.std(X))
    q75, q25 = np.percentile(X, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    return 0.9 * spread * X.size ** -0.2


def _linear_bin(X, weights, grid: Grid1D):
    h = grid.spacing
    s = (X - grid.x_min) / h
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    n = grid.n_cells
    inside = (i0 >= 0) & (i0 < n)
    i0, frac = i0[inside], frac[inside]
    i1 = (i0 + 1) % n  # periodic wrap for the last cell
    out = []
    for w in weights:
        w = w[inside]
        acc = np.bincount(i0, weights=w * (1.0 - frac), minlength=n)
        acc += np.bincount(i1, weights=w * frac, minlength=n)
        out.append(acc)
    return out, int(inside.sum())


def _gauss_kernel_fft(grid: Grid1D, bandwidth: float):
    n, h = grid.n_cells, grid.spacing
    k = np.arange(n)
    d = np.minimum(k, n - k) * h
    w = np.exp(-0.5 * (d / bandwidth) ** 2) if bandwidth > 0 else (k == 0).astype(float)
    w /= w.sum()
    return np.fft.rfft(w)


def estimate_moments(ens: ParticleEnsemble, grid: Grid1D, bandwidth="silverman",
                     floor: float = 1e-6) -> MomentFields:
    """Gaussian-kernel density and Nadaraya-Watson means on a periodic grid.

    Particles are linearly binned, then the binned sums are convolved with
    the sampled kernel (normalized to unit discrete mass), so the estimate
    integrates to the fraction of particles inside the grid.
    """
    if ens.N == 0:
        raise ConfigError("empty ensemble")
    bw = silverman_bandwidth(ens.X) if bandwidth == "silverman" else float(bandwidth)
    (c, mv, me), n_in = _linear_bin(ens.X, [np.ones(ens.N), np.asarray(ens.V), np.asarray(ens.E)], grid)
    if n_in == 0:
        raise ConfigError("no particles inside the estimation grid")
    K = _gauss_kernel_fft(grid, bw)
    n = grid.n_cells
    norm = 1.0 / (ens.N * grid.spacing)

    def smooth(a):
        return np.fft.irfft(np.fft.rfft(a) * K, n) * norm

    rho = np.maximum(smooth(c), 0.0)
    fV, fE = smooth(mv), smooth(me)
    ok = rho > floor * rho.max()
    with np.errstate(invalid="ignore", divide="ignore"):
        Vhat = np.where(ok, fV / rho, np.nan)
        Ehat = np.where(ok, fE / rho, np.nan)
    return MomentFields(grid, ens.t, rho, Vhat, Ehat, bw, np.where(ok, fV, 0.0), np.where(ok, fE, 0.0))


def moment_residual(m0: MomentFields, m1: MomentFields, sigma: float) -> np.ndarray:
    """Discrete residual of rho_t + (rho Vhat)_x - sigma^2/2 rho_xx at the mid time."""
    if m0.grid != m1.grid:
        raise ConfigError("moment fields live on different grids")
    dt = m1.t - m0.t
    if not dt > 0:
        raise ConfigError("second snapshot must be later")
    h = m0.grid.spacing
    rho_mid = 0.5 * (m0.rho + m1.rho)
    flux = 0.5 * (m0.flux_V + m1.flux_V)
    dflux = (np.roll(flux, -1) - np.roll(flux, 1)) / (2 * h)
    lap = (np.roll(rho_mid, -1) - 2 * rho_mid + np.roll(rho_mid, 1)) / (h * h)
    return (m1.rho - m0.rho) / dt + dflux - 0.5 * sigma ** 2 * lap


def batch_residual_floor(ens0: ParticleEnsemble, ens1: ParticleEnsemble, grid: Grid1D,
                         bandwidth: float, n_batches: int = 10) -> np.ndarray:
    """Per-point standard error of the continuity residual from disjoint particle batches."""
    N = ens0.N
    edges = np.linspace(0, N, n_batches + 1).astype(int)
    res = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sub0 = ParticleEnsemble(ens0.X[lo:hi].copy(), ens0.V[lo:hi].copy(), ens0.E[lo:hi].copy(),
                                ens0.sigma, ens0.seed, ens0.t, ens0.step)
        sub1 = ParticleEnsemble(ens1.X[lo:hi].copy(), ens1.V[lo:hi].copy(), ens1.E[lo:hi].copy(),
                                ens1.sigma, ens1.seed, ens1.t, ens1.step)
        res.append(moment_residual(estimate_moments(sub0, grid, bandwidth, floor=0.0),
                                   estimate_moments(sub1, grid, bandwidth, floor=0.0), ens0.sigma))
    res = np.array(res)
    return res.std(axis=0, ddof=1) / math.sqrt(n_batches)


def eulerian_reference(init: InitialData, t: float, x: np.ndarray, fine: int = 200_001,
                       span: tuple[float, float] | None = None):
    """Deterministic (V, E) at time t on points x, by inverting the characteristic map.

    Valid only before blow-up, where x0 -> x(t; x0) is monotone.
    """
    lo, hi = span if span is not None else (float(x.min()) - 5.0, float(x.max()) + 5.0)
    x0 = np.linspace(lo, hi, fine)
    xt, V, E, jac = lagrangian_map(init, x0, t)
    if np.any(jac <= 0) or np.any(np.diff(xt) <= 0):
        raise ValueError(f"characteristics have crossed before t={t}; no single-valued reference")
    return np.interp(x, xt, V), np.interp(x, xt, E)


@dataclass(frozen=True)
class StudyRow:
    sigma: float
    t: float
    err_V: float
    err_E: float
    floor_V: float
    floor_E: float

    @property
    def excess_V(self) -> float:
        return self.err_V - self.floor_V

    @property
    def excess_E(self) -> float:
        return self.err_E - self.floor_E


def _errors(m: MomentFields, Vref, Eref, region):
    ok = region & m.defined
    if not ok.any():
        return math.nan, math.nan
    return (float(np.max(np.abs(m.Vhat[ok] - Vref[ok]))), float(np.max(np.abs(m.Ehat[ok] - Eref[ok]))))


def convergence_study(init: InitialData, sigmas, N: int, t_checkpoints, f0=None,
                      grid: Grid1D = Grid1D(-10.0, 10.0, 800), bandwidth: float = 0.1,
                      dt: float = 0.01, seed: int = 1, region=None, workers: int = 1):
    """Distance of (Vhat, Ehat) to the deterministic solution for each sigma.

    All ensembles share one seed, so the sigma = 0 ensemble with the same
    particles gives the paired sampling/bandwidth floor that is reported
    next to each error. Errors are sup norms over ``region`` (default
    |x| <= 4) intersected with the points where rho is above the floor.
    Data that blow up before the last checkpoint get :func:`post_blowup_check`
    instead.
    """
    sigmas = [float(s) for s in sigmas]
    if any(not s > 0 for s in sigmas):
        raise ConfigError("sigma must be positive in a convergence study")
    f0 = f0 if f0 is not None else plateau_density(7.0)
    checkpoints = sorted(float(t) for t in t_checkpoints)
    x = grid.x
    region = np.abs(x) <= 4.0 if region is None else region
    xs = np.linspace(-50, 50, 400_001)
    t_star = float(np.min(exact_blowup_time(init.v0(xs), init.e0(xs))))
    if t_star <= checkpoints[-1]:
        raise ValueError(f"data blow up at t*={t_star:.4g}; use post_blowup_check")
    refs = {t: eulerian_reference(init, t, x) for t in checkpoints}

    def moments_for(sig):
        out = {}
        ens = init_ensemble(init, f0, N, sig, seed, grid)
        evolve(ens, checkpoints[-1], dt, workers, checkpoints,
               callback=lambda e: out.__setitem__(round(e.t, 12), estimate_moments(e, grid, bandwidth)))
        return out

    base = moments_for(0.0)
    rows = []
    for sig in sigmas:
        ms = moments_for(sig)
        for t in checkpoints:
            Vr, Er = refs[t]
            eV, eE = _errors(ms[round(t, 12)], Vr, Er, region)
            fV, fE = _errors(base[round(t, 12)], Vr, Er, region)
            rows.append(StudyRow(sig, t, eV, eE, fV, fE))
    return rows


def post_blowup_check(init: InitialData, sigma: float, N: int, f0=None,
                      grid: Grid1D = Grid1D(-10.0, 10.0, 800), bandwidth: float = 0.1,
                      dt: float = 0.01, seed: int = 1, factor: float = 1.5, workers: int = 1) -> dict:
    """Moment fields past the deterministic blow-up time.

    Evolves to factor * t*, recording max rho, max|Vhat|, max|Ehat| and the
    mass at checkpoints, plus max rho with the bandwidth halved at the end.
    """
    if not sigma > 0:
        raise ConfigError("sigma must be positive")
    f0 = f0 if f0 is not None else plateau_density(7.0)
    xs = np.linspace(-50, 50, 400_001)
    t_star = float(np.min(exact_blowup_time(init.v0(xs), init.e0(xs))))
    if not math.isfinite(t_star):
        raise ValueError("data do not blow up")
    t_end = factor * t_star
    times = list(np.linspace(t_end / 6, t_end, 6))
    rec = []

    def cb(e):
        m = estimate_moments(e, grid, bandwidth)
        rec.append((e.t, m.mass, float(m.rho.max()), float(np.nanmax(np.abs(m.Vhat))),
                    float(np.nanmax(np.abs(m.Ehat))), bool(np.all(np.isfinite(m.rho)))))

    ens = init_ensemble(init, f0, N, sigma, seed, grid)
    final = evolve(ens, t_end, dt, workers, times, cb)
    m_full = estimate_moments(final, grid, bandwidth)
    m_half = estimate_moments(final, grid, bandwidth / 2)
    return {
        "t_star": t_star,
        "t_end": t_end,
        "records": rec,
        "max_rho": float(m_full.rho.max()),
        "max_rho_half_bandwidth": float(m_half.rho.max()),
        "finite": all(r[5] for r in rec) and all(math.isfinite(r[3]) and math.isfinite(r[4]) for r in rec),
        "mass": [r[1] for r in rec],
    }


def max_delta(init: InitialData, x=None) -> float:
    x = np.linspace(-20, 20, 400_001) if x is None else x
    return float(np.max(delta(init.v0(x), init.e0(x))))


# -- checkpoints and CSV ------------------------------------------------------

def save_checkpoint(ens: ParticleEnsemble, path) -> None:
    """Little-endian header (N, sigma, seed, t, step) then X, V, E as float64."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ens.N, ens.sigma, ens.seed, ens.t, ens.step))
        for a in (ens.X, ens.V, ens.E):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ParticleEnsemble:
    data = Path(path).read_bytes()
    N, sigma, seed, t, step = _HEADER.unpack_from(data, 0)
    off = _HEADER.size
    arrs = np.frombuffer(data, dtype="<f8", count=3 * N, offset=off).astype(float)
    X, V, E = arrs[:N].copy(), arrs[N:2 * N].copy(), arrs[2 * N:].copy()
    return ParticleEnsemble(X, V, E, sigma, seed, t, step)


def moments_to_rows(m: MomentFields):
    for xi, r, v, e in zip(m.grid.x, m.rho, m.Vhat, m.Ehat):
        yield (m.t, float(xi), float(r), float(v), float(e))
