"""Grids, field containers, initial-data presets and density reconstruction.

Everything here is nondimensional with background density 1 and unit
coupling, so the cold-plasma frequency is 1 and linear oscillations have
period 2*pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

Profile = Callable[[np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Invalid parameters or configuration (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [x_min, x_max); the right end is identified with x_min."""

    x_min: float = -20.0
    x_max: float = 20.0
    n_cells: int = 4096

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ConfigError("grid bounds must be finite")
        if self.x_min >= self.x_max:
            raise ConfigError(f"x_min={self.x_min} must be below x_max={self.x_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ConfigError(f"n_cells must be an integer >= 8, got {self.n_cells}")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n_cells)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, self.n_cells * factor)


def ddx(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order centred first derivative with periodic wrap."""
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * h)


def d2dx2(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order three-point second derivative with periodic wrap."""
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / (h * h)


def reconstruct_density(E: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Density n = 1 - dE/dx from the field, centred differences, periodic.

    Non-positive values are returned as they are; callers decide whether
    that is a breakdown.
    """
    E = np.asarray(E, dtype=float)
    if E.shape != (grid.n_cells,):
        raise ConfigError(f"E has shape {E.shape}, grid expects ({grid.n_cells},)")
    return 1.0 - ddx(E, grid.spacing)


@dataclass(frozen=True)
class FieldState:
    """Eulerian snapshot (V, E) at time t. Density is derived on access."""

    t: float
    V: np.ndarray
    E: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        shape = (self.grid.n_cells,)
        if np.shape(self.V) != shape or np.shape(self.E) != shape:
            raise ConfigError("V and E must match the grid size")

    @property
    def n(self) -> np.ndarray:
        return reconstruct_density(self.E, self.grid)


@dataclass(frozen=True)
class CharState:
    """Values carried along one characteristic: position, (V, E) and their x-derivatives (v, e)."""

    t: float
    x: float
    V: float
    E: float
    v: float
    e: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.V, self.E, self.v, self.e], dtype=float)


@dataclass(frozen=True)
class InitialData:
    """Initial profiles together with their analytic derivatives.

    ``v0 = V0'``, ``e0 = E0'`` and ``e0p = E0''``; all callables accept and
    return numpy arrays.
    """

    preset: str
    params: dict
    V0: Profile
    E0: Profile
    v0: Profile
    e0: Profile
    e0p: Profile

    def sample(self, grid: Grid1D) -> FieldState:
        x = grid.x
        return FieldState(0.0, np.asarray(self.V0(x), float), np.asarray(self.E0(x), float), grid)

    def char_state(self, x0: float) -> CharState:
        x = np.array([x0], dtype=float)
        return CharState(0.0, float(x0), float(self.V0(x)[0]), float(self.E0(x)[0]),
                         float(self.v0(x)[0]), float(self.e0(x)[0]))


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _laser_pulse(a: float, sign: float = 1.0) -> InitialData:
    # E0 = sign * a * d/dx exp(-x^2); sign=-1 gives the E = -dPhi/dx convention
    # for Phi0 = a exp(-x^2).
    s = sign * a

    def E0(x):
        x = np.asarray(x, float)
        return -2.0 * s * x * np.exp(-x * x)

    def e0(x):
        x = np.asarray(x, float)
        return s * (4.0 * x * x - 2.0) * np.exp(-x * x)

    def e0p(x):
        x = np.asarray(x, float)
        return s * (12.0 * x - 8.0 * x ** 3) * np.exp(-x * x)

    return InitialData("laser_pulse", {"a": a, "sign": sign}, _zeros, E0, _zeros, e0, e0p)


def _gaussian_e(a: float, s: float = 1.0) -> InitialData:
    def g(x):
        x = np.asarray(x, float)
        return np.exp(-(x / s) ** 2)

    def E0(x):
        return a * g(x)

    def e0(x):
        return -2.0 * a * np.asarray(x, float) / s ** 2 * g(x)

    def e0p(x):
        x = np.asarray(x, float)
        return a * (4.0 * x * x / s ** 4 - 2.0 / s ** 2) * g(x)

    return InitialData("gaussian_e", {"a": a, "s": s}, _zeros, E0, _zeros, e0, e0p)


def _gaussian_v(a: float, s: float = 1.0) -> InitialData:
    def V0(x):
        x = np.asarray(x, float)
        return a * np.exp(-(x / s) ** 2)

    def v0(x):
        x = np.asarray(x, float)
        return -2.0 * a * x / s ** 2 * np.exp(-(x / s) ** 2)

    return InitialData("gaussian_v", {"a": a, "s": s}, V0, _zeros, v0, _zeros, _zeros)


def _custom_table(x, V, E) -> InitialData:
    x = np.asarray(x, float)
    V = np.asarray(V, float)
    E = np.asarray(E, float)
    if x.ndim != 1 or x.shape != V.shape or x.shape != E.shape or x.size < 4:
        raise ConfigError("custom_table needs equal-length 1D x, V, E with at least 4 samples")
    if np.any(np.diff(x) <= 0):
        raise ConfigError("custom_table x must be strictly increasing")
    sV = CubicSpline(x, V, bc_type="natural")
    sE = CubicSpline(x, E, bc_type="natural")
    lo, hi = x[0], x[-1]

    def wrap(spline, nu):
        def f(q):
            q = np.asarray(q, float)
            out = spline(q, nu)
            return np.where((q >= lo) & (q <= hi), out, 0.0)
        return f

    return InitialData("custom_table", {"n_samples": int(x.size)},
                       wrap(sV, 0), wrap(sE, 0), wrap(sV, 1), wrap(sE, 1), wrap(sE, 2))


_PRESETS = {
    "laser_pulse": _laser_pulse,
    "laser": _laser_pulse,
    "gaussian_e": _gaussian_e,
    "gaussian_v": _gaussian_v,
    "custom_table": _custom_table,
}


def make_initial_data(preset: str, **params) -> InitialData:
    """Build an :class:`InitialData` from a preset name and its parameters.

    Presets: ``laser_pulse(a, sign=1)``, ``gaussian_e(a, s=1)``,
    ``gaussian_v(a, s=1)``, ``zero`` and ``custom_table(x, V, E)``.
    """
    if preset == "zero":
        if params:
            raise ConfigError(f"preset 'zero' takes no parameters, got {sorted(params)}")
        return InitialData("zero", {}, _zeros, _zeros, _zeros, _zeros, _zeros)
    if preset not in _PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(_PRESETS) + ['zero']}")
    if preset != "custom_table":
        for k, v in params.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"parameter {k}={v!r} must be a finite number")
        if preset in ("laser_pulse", "laser") and params.get("a", 0.0) <= 0:
            raise ConfigError("laser_pulse needs a > 0")
        if "s" in params and params["s"] <= 0:
            raise ConfigError("width s must be positive")
        if "sign" in params and params["sign"] not in (1, -1, 1.0, -1.0):
            raise ConfigError("sign must be +1 or -1")
    try:
        return _PRESETS[preset](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {preset}: {exc}") from None


@dataclass(frozen=True)
class RegularizerSpec:
    """Which extra terms are switched on, with their coefficients.

    ``nu_density = (nu0, gamma_f)`` means friction nu0 * n**gamma_f.
    Pressure is p(n) = n**gamma_p / gamma_p scaled by ``alpha``.
    ``pressure_form="laplacian_e"`` swaps the pressure gradient for the
    literal +alpha*E_xx term, valid only when gamma_p == 2.
    """

    nu_const: float = 0.0
    nu_density: tuple[float, float] | None = None
    alpha: float = 0.0
    gamma_p: float = 2.0
    mu: float = 0.0
    exotic_viscosity: bool = False
    kappa: float = 0.0
    pressure_form: str = "density"
    allow_combinations: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("nu_const", "alpha", "mu", "kappa"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ConfigError(f"{name} must be a finite non-negative number, got {val}")
        if self.nu_density is not None:
            nu0, g = self.nu_density
            if not (math.isfinite(nu0) and math.isfinite(g)) or nu0 < 0:
                raise ConfigError("nu_density needs nu0 >= 0 and finite exponent")
        if self.alpha > 0 and not self.gamma_p > 1:
            raise ConfigError("pressure exponent gamma_p must exceed 1")
        if self.pressure_form not in ("density", "laplacian_e"):
            raise ConfigError(f"unknown pressure_form {self.pressure_form!r}")
        if self.pressure_form == "laplacian_e" and self.gamma_p != 2:
            raise ConfigError("pressure_form='laplacian_e' is only the gamma_p=2 reduction")
        if self.exotic_viscosity and self.mu <= 0:
            raise ConfigError("exotic_viscosity needs mu > 0")
        if not self.allow_combinations:
            # mu and kappa together is the diagonal diffusion-matrix case, which counts as one factor
            groups = [self.nu_const > 0, self.nu_density is not None, self.alpha > 0,
                      self.mu > 0 or self.kappa > 0]
            if sum(groups) > 1:
                raise ConfigError("only single-factor regularizers are accepted; "
                                  "set allow_combinations=True to mix terms")

    @property
    def is_off(self) -> bool:
        return (self.nu_const == 0 and self.nu_density is None and self.alpha == 0
                and self.mu == 0 and self.kappa == 0)

    def needs_positive_density(self) -> bool:
        return self.alpha > 0 or self.exotic_viscosity or self.nu_density is not None
