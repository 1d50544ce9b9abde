import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coldplasma.characteristics import exact_blowup_time
from coldplasma.fields import (SolverConfig, Thresholds, classify_singularity, exotic_viscosity_indicator,
                               power_law_admissibility, rhs, run_to_json, solve, stable_dt, write_snapshots)
from coldplasma.state import ConfigError, Grid1D, RegularizerSpec, make_initial_data
from coldplasma.stochastic import eulerian_reference

GRID = Grid1D(-10.0, 10.0, 512)
A_BLOW = 1.3 * math.exp(1.5) / 8  # max Delta = 0.3 for the laser pulse


def test_rhs_vanishes_on_rest_state():
    z = np.zeros(GRID.n_cells)
    for reg in [RegularizerSpec(), RegularizerSpec(mu=0.1, kappa=0.2), RegularizerSpec(alpha=1.0),
                RegularizerSpec(nu_density=(0.3, 2.0)), RegularizerSpec(mu=0.1, exotic_viscosity=True)]:
        dV, dE = rhs(z, z, reg, GRID)
        assert np.all(dV == 0) and np.all(dE == 0)


@given(st.floats(1e-4, 1e-3))
def test_rhs_linearizes_to_rotation(a):
    s = make_initial_data("gaussian_e", a=a).sample(GRID)
    V = make_initial_data("gaussian_v", a=a).sample(GRID).V
    dV, dE = rhs(V, s.E, RegularizerSpec(), GRID)
    assert np.max(np.abs(dV + s.E)) < 10 * a * a
    assert np.max(np.abs(dE - V)) < 10 * a * a


def test_pressure_forms_agree_at_gamma_two():
    s = make_initial_data("laser_pulse", a=0.3).sample(GRID)
    V = 0.1 * np.exp(-GRID.x ** 2)
    a = rhs(V, s.E, RegularizerSpec(alpha=0.7), GRID)
    b = rhs(V, s.E, RegularizerSpec(alpha=0.7, pressure_form="laplacian_e"), GRID)
    assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1])


def test_smooth_run_converges_to_lagrangian_solution():
    init = make_initial_data("laser_pulse", a=0.2)
    errs, hs = [], []
    for n in (128, 256, 512):
        g = Grid1D(-10.0, 10.0, n)
        run = solve(init, SolverConfig(grid=g, t_end=1.5))
        V, E = eulerian_reference(init, 1.5, g.x)
        errs.append(max(np.max(np.abs(run.final.V - V)), np.max(np.abs(run.final.E - E))))
        hs.append(g.spacing)
    assert not run.report.blew_up
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= 1.8


def test_linear_friction_matches_damped_oscillator():
    a, nu, t = 1e-3, 0.5, 4.0
    init = make_initial_data("laser_pulse", a=a)
    run = solve(init, SolverConfig(grid=GRID, t_end=t, reg=RegularizerSpec(nu_const=nu)))
    w = math.sqrt(1 - nu * nu / 4)
    E = init.E0(GRID.x) * math.exp(-nu * t / 2) * (math.cos(w * t) + nu / (2 * w) * math.sin(w * t))
    assert np.max(np.abs(run.final.E - E)) < 1e-3 * a


def test_blowup_detected_near_exact_time():
    init = make_initial_data("laser_pulse", a=A_BLOW)
    x = np.linspace(-10, 10, 200_001)
    t_exact = float(np.min(exact_blowup_time(init.v0(x), init.e0(x))))
    run = solve(init, SolverConfig(grid=Grid1D(-10.0, 10.0, 1024), t_end=10.0))
    assert run.report.blew_up
    assert run.detected_at == pytest.approx(t_exact, rel=0.03)
    assert run.report.t_star >= run.t[0]


def test_subcritical_run_stays_smooth():
    run = solve(make_initial_data("laser_pulse", a=0.5), SolverConfig(grid=GRID, t_end=20.0))
    assert not run.report.blew_up
    assert run.min_n.min() > 0


def test_negative_initial_density_reported_for_pressure():
    run = solve(make_initial_data("laser_pulse", a=1.5), SolverConfig(grid=GRID, t_end=1.0,
                                                                     reg=RegularizerSpec(alpha=1.0)))
    assert run.report.blew_up and run.report.witness == "n<=0"


def test_data_must_vanish_at_edge():
    with pytest.raises(ConfigError):
        solve(make_initial_data("laser_pulse", a=0.3), SolverConfig(grid=Grid1D(-2.0, 2.0, 64), t_end=1.0))


@pytest.mark.parametrize("kw", [dict(cfl=1.5), dict(t_end=0.0), dict(scheme="magic"), dict(output_dt=-1.0)])
def test_solver_config_validates(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_stable_dt_respects_diffusion_limit():
    s = make_initial_data("laser_pulse", a=0.3).sample(GRID)
    cfg = SolverConfig(grid=GRID, reg=RegularizerSpec(mu=1.0))
    assert stable_dt(s.V, s.E, cfg) <= cfg.cfl * GRID.spacing ** 2 / 2


def test_snapshots_and_json(tmp_path):
    run = solve(make_initial_data("laser_pulse", a=0.1), SolverConfig(grid=Grid1D(-10, 10, 64), t_end=1.0,
                                                                      output_dt=0.5))
    paths = write_snapshots(run, tmp_path, "demo")
    assert [p.name for p in paths] == ["demo_0.csv", "demo_1.csv", "demo_2.csv"]
    data = np.loadtxt(paths[-1], delimiter=",", skiprows=1)
    assert data.shape == (64, 5) and np.allclose(data[:, 0], 1.0)
    assert json.loads(json.dumps(run_to_json(run)))["report"]["blew_up"] is False


@pytest.mark.parametrize("gamma,admissible", [(0.25, False), (0.5, False), (1.0, True), (1.5, True), (2.0, True)])
def test_power_law_admissibility(gamma, admissible):
    r = power_law_admissibility(gamma)
    assert r["admissible"] is admissible
    assert r["limit"] == pytest.approx(gamma)


def test_exotic_viscosity_indicator_on_smooth_run():
    run = solve(make_initial_data("laser_pulse", a=0.2),
                SolverConfig(grid=GRID, t_end=2.0, output_dt=0.5, reg=RegularizerSpec(mu=0.1, exotic_viscosity=True)))
    t, vals, crossed = exotic_viscosity_indicator(run)
    assert len(t) == len(run.states) and np.all(np.isfinite(vals)) and not crossed
    with pytest.raises(ConfigError):
        exotic_viscosity_indicator(solve(make_initial_data("laser_pulse", a=0.2), SolverConfig(grid=GRID, t_end=0.1)))


def test_classify_needs_blown_up_run():
    run = solve(make_initial_data("laser_pulse", a=0.2), SolverConfig(grid=GRID, t_end=0.5))
    with pytest.raises(ConfigError):
        classify_singularity(run, [GRID, GRID.refined()])


def test_pressure_shock_is_weak_in_e():
    init = make_initial_data("laser_pulse", a=A_BLOW)
    grids = [Grid1D(-10.0, 10.0, n) for n in (256, 512, 1024)]
    cfg = SolverConfig(grid=grids[0], t_end=4.0, reg=RegularizerSpec(alpha=1.0), thresholds=Thresholds(resolution=0.2))
    run = solve(init, cfg)
    kind = classify_singularity(run, grids)
    assert kind.E == "weak" and kind.V == "catastrophe"
