import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coldplasma.diagnostics import (amplitude_for_delta, cole_hopf_residual, critical_amplitude, criterion_table,
                                    periodic_antiderivative, periodicity_check, reconcile_criterion, text_table)
from coldplasma.fields import SolverConfig, solve
from coldplasma.state import ConfigError, Grid1D, RegularizerSpec, make_initial_data

GRID = Grid1D(-10.0, 10.0, 512)
A_CRIT = math.exp(1.5) / 8  # where 4 a exp(-3/2) reaches 1/2


@given(st.integers(1, 6), st.floats(-2, 2))
def test_antiderivative_inverts_derivative(k, c):
    g = Grid1D(0.0, 2 * np.pi, 256)
    f = np.cos(k * g.x) + c
    F = periodic_antiderivative(f, g)
    assert abs(F.mean()) < 1e-12
    assert np.allclose(F, np.sin(k * g.x) / k, atol=1e-12)


def test_critical_amplitude_closed_form():
    assert critical_amplitude(0.0) == pytest.approx(A_CRIT, rel=1e-6)
    assert critical_amplitude(1.0, 2.0) == pytest.approx(A_CRIT, rel=1e-6)
    assert critical_amplitude(0.0, sign=-1) == pytest.approx(0.25, rel=1e-6)


def test_amplitude_for_delta():
    assert amplitude_for_delta(0.3) == pytest.approx(1.3 * A_CRIT, rel=1e-6)


def test_criterion_table_rejects_other_regularizers():
    init = make_initial_data("laser_pulse", a=0.3)
    lhs, rhs, name = criterion_table(init, RegularizerSpec(), GRID.x)
    assert name == "delta" and np.all(rhs == 0)
    with pytest.raises(ConfigError):
        criterion_table(init, RegularizerSpec(mu=0.1), GRID.x)


@pytest.mark.parametrize("a,blow", [(0.3, False), (0.75, True)])
def test_reconciliation_agrees(a, blow):
    rep = reconcile_criterion(make_initial_data("laser_pulse", a=a), RegularizerSpec(), GRID, t_end=20.0)
    assert rep.predicted_blowup is blow and rep.agreement and not rep.failure
    assert abs(abs(rep.argmax_x) - math.sqrt(1.5)) < 2 * GRID.spacing
    assert json.loads(rep.to_json())["criterion"] == "delta"


def test_periodicity_check_small_for_smooth_run():
    g = Grid1D(-10.0, 10.0, 256)
    run = solve(make_initial_data("laser_pulse", a=0.05), SolverConfig(grid=g, t_end=2 * np.pi, output_dt=np.pi))
    assert periodicity_check(run) < 1e-6
    with pytest.raises(ConfigError):
        periodicity_check(solve(make_initial_data("laser_pulse", a=0.05),
                                SolverConfig(grid=g, t_end=1.0, reg=RegularizerSpec(mu=0.1))))


def test_cole_hopf_residual_shrinks_under_refinement():
    init = make_initial_data("laser_pulse", a=0.6)
    out = []
    for n in (256, 512):
        g = Grid1D(-10.0, 10.0, n)
        run = solve(init, SolverConfig(grid=g, t_end=2.0, output_dt=8 * g.spacing, reg=RegularizerSpec(mu=0.1)))
        out.append(cole_hopf_residual(run, 0.1)[1].max())
    assert out[1] < out[0] / 3.0  # second order once resolved


def test_cole_hopf_needs_plain_viscosity():
    run = solve(make_initial_data("laser_pulse", a=0.2), SolverConfig(grid=GRID, t_end=0.2, output_dt=0.1))
    with pytest.raises(ConfigError):
        cole_hopf_residual(run, 0.1)


def test_cole_hopf_residual_bounded_and_zero_at_rest():
    g = Grid1D(-10.0, 10.0, 128)
    run = solve(make_initial_data("laser_pulse", a=0.3),
                SolverConfig(grid=g, t_end=0.5, output_dt=0.1, reg=RegularizerSpec(mu=0.2)))
    r = cole_hopf_residual(run, 0.2)[1]
    assert np.all(np.isfinite(r)) and np.all(r < 1.0)
    rest = solve(make_initial_data("zero"), SolverConfig(grid=g, t_end=0.2, output_dt=0.1,
                                                         reg=RegularizerSpec(mu=0.2)))
    assert np.allclose(cole_hopf_residual(rest, 0.2)[1], 0.0, atol=1e-14)


def test_text_table_aligns():
    s = text_table([(1, 2.5), (10, 0.125)], ["n", "err"])
    lines = s.splitlines()
    assert len({len(line) for line in lines}) == 1 and lines[1].startswith("--")
