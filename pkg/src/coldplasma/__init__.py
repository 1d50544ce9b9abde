"""Numerical lab for the 1D repulsive Euler-Poisson (cold plasma) equations.

Modules
-------
state            grids, initial data presets, regularizer choice
characteristics  characteristic ODEs, blow-up sweeps, friction phase plane
fields           Eulerian solver with friction, pressure and viscosity
stochastic       stochastic characteristics and kernel moment fields
diagnostics      Cole-Hopf residual, periodicity, criterion reconciliation
verify           acceptance suites
cli              ``coldplasma`` command line
"""
from .state import (CharState, ConfigError, FieldState, Grid1D, InitialData, RegularizerSpec,
                    make_initial_data, reconstruct_density)
from .characteristics import (BlowupReport, CharSystemKind, IntegratorOptions, blowup_sweep,
                              classify_equilibria, delta, delta_p, exact_blowup_time, integrate_characteristic,
                              lagrangian_map, trace_separatrix)
from .fields import RunResult, SolverConfig, Thresholds, solve

__version__ = "0.1.0"

__all__ = [
    "BlowupReport", "CharState", "CharSystemKind", "ConfigError", "FieldState", "Grid1D", "InitialData",
    "IntegratorOptions", "RegularizerSpec", "RunResult", "SolverConfig", "Thresholds", "blowup_sweep",
    "classify_equilibria", "delta", "delta_p", "exact_blowup_time", "integrate_characteristic",
    "lagrangian_map", "make_initial_data", "reconstruct_density", "solve", "trace_separatrix",
]
