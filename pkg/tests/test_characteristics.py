import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from coldplasma.characteristics import (BlowupReport, CharSystemKind, IntegratorOptions, SeparatrixOptions,
                                        StiffnessError, blowup_sweep, classify_equilibria, delta, delta_p,
                                        exact_blowup_time, fit_blowup_time, integrate_batch,
                                        integrate_characteristic, kind_from_eigenvalues, lagrangian_map,
                                        phase_jacobian, smoothness_membership, trace_boundary_rays,
                                        trace_separatrix)
from coldplasma.state import CharState, ConfigError, make_initial_data

finite = dict(allow_nan=False, allow_infinity=False)


def closed_form(v0, e0, t):
    """(v, e) along an original characteristic from the Jacobian J = 1 + v0 sin t + e0 (cos t - 1)."""
    J = 1 + v0 * np.sin(t) + e0 * (np.cos(t) - 1)
    dJ = v0 * np.cos(t) - e0 * np.sin(t)
    return dJ / J, 1 - (1 - e0) / J


def test_delta_trivial_values():
    assert delta(0.0, 0.0) == -1.0
    assert delta(1.0, 0.0) == 0.0
    lhs, rhs = delta_p(0.0, 0.0, 0.0, 1.0, 2.0)
    assert lhs <= rhs


@given(st.floats(-1.5, 1.5, **finite), st.floats(-1.5, 0.95, **finite))
def test_integrator_matches_closed_form(v0, e0):
    assume(abs(delta(v0, e0)) > 0.05)
    traj, rep = integrate_characteristic(CharSystemKind(0.0), CharState(0, 0, 0, 0, v0, e0), 10.0)
    ok = traj.t < (exact_blowup_time(v0, e0) - 0.2)
    v, e = closed_form(v0, e0, traj.t[ok])
    assert np.allclose(traj.y[ok, 3], v, rtol=1e-6, atol=1e-7)
    assert np.allclose(traj.y[ok, 4], e, rtol=1e-6, atol=1e-7)
    assert rep.blew_up == (delta(v0, e0) >= 0)


@given(st.floats(-1.5, 1.5, **finite), st.floats(-1.5, 0.95, **finite))
def test_blowup_time_matches_exact_oracle(v0, e0):
    assume(delta(v0, e0) > 0.05)
    _, rep = integrate_characteristic(CharSystemKind(0.0), CharState(0, 0, 0, 0, v0, e0), 20.0)
    assert rep.blew_up
    assert rep.t_star == pytest.approx(float(exact_blowup_time(v0, e0)), rel=1e-5, abs=1e-6)


def test_exact_blowup_time_is_first_root_of_jacobian():
    v0, e0 = 0.5, 0.5  # J = 0.5 + 0.5 (sin t + cos t), first zero at t = pi
    assert exact_blowup_time(v0, e0) == pytest.approx(math.pi)
    assert np.isinf(exact_blowup_time(0.0, 0.0))
    assert exact_blowup_time(1.0, 0.0) == pytest.approx(1.5 * math.pi)


@given(st.floats(-1.0, 0.9, **finite), st.floats(-0.95, 0.95, **finite))
def test_smooth_characteristics_have_period_two_pi(v0, e0):
    assume(delta(v0, e0) < -0.05)
    res = integrate_batch(0.0, np.array([[0, 0.2, -0.1, v0, e0]]), 2 * math.pi)
    assert not res.blew_up[0]
    assert np.allclose(res.y_final[0, 1:], [0.2, -0.1, v0, e0], atol=1e-7)


def test_sweep_batch_equals_individual_runs():
    v0 = np.array([0.0, 1.2, -0.3, 0.8])
    e0 = np.array([0.0, 0.1, 0.5, -1.0])
    res = blowup_sweep(0.0, v0, e0, 30.0, chunk=2)
    for i in range(4):
        _, rep = integrate_characteristic(CharSystemKind(0.0), CharState(0, 0, 0, 0, v0[i], e0[i]), 30.0)
        assert res.blew_up[i] == rep.blew_up


def test_fit_recovers_pole():
    t = np.linspace(0, 1.99, 400)
    v = 3.0 / (2.0 - t)
    assert fit_blowup_time(t, v) == pytest.approx(2.0, rel=1e-6)


def test_stiffness_error_on_forced_tiny_steps():
    opts = IntegratorOptions(min_step=0.5, first_step=0.5, rtol=1e-14, atol=1e-16)
    with pytest.raises(StiffnessError):
        integrate_batch(0.0, np.array([[0, 0, 0, 1.5, 0.5]]), 10.0, opts)


def test_blowup_report_validates():
    with pytest.raises(ValueError):
        BlowupReport(True)
    with pytest.raises(ValueError):
        BlowupReport(False, 1.0)


def test_negative_friction_rejected():
    with pytest.raises(ConfigError):
        CharSystemKind(-1.0)
    with pytest.raises(ConfigError):
        classify_equilibria(-0.5)
    with pytest.raises(ConfigError):
        smoothness_membership(-1.0, 0.0, 0.0)


@given(st.floats(-3, 3, **finite), st.floats(-3, 3, **finite))
def test_lagrangian_jacobian_matches_finite_difference(x0, t):
    init = make_initial_data("laser_pulse", a=0.3)
    h = 1e-6
    xp = lagrangian_map(init, np.array([x0 + h]), t)[0]
    xm = lagrangian_map(init, np.array([x0 - h]), t)[0]
    jac = lagrangian_map(init, np.array([x0]), t)[3]
    assert (xp - xm)[0] / (2 * h) == pytest.approx(jac[0], abs=1e-6)


def test_lagrangian_map_rotates_field():
    init = make_initial_data("gaussian_v", a=0.4)
    x0 = np.linspace(-3, 3, 7)
    _, V, E, _ = lagrangian_map(init, x0, math.pi / 2)
    assert np.allclose(V, -init.E0(x0))
    assert np.allclose(E, init.V0(x0))


# -- phase plane ---------------------------------------------------------------

def test_equilibria_taxonomy_examples():
    assert [q.kind for q in classify_equilibria(0.0)] == ["center"]
    assert [q.kind for q in classify_equilibria(1.0)] == ["stable_focus"]
    eqs = classify_equilibria(3.0)
    assert [q.kind for q in eqs] == ["stable_node", "saddle", "unstable_node"]
    s = math.sqrt(5.0)
    assert eqs[1].location == pytest.approx((1.0, -(3 - s) / 2))
    assert eqs[2].location == pytest.approx((1.0, -(3 + s) / 2))
    assert [q.kind for q in classify_equilibria(2.0)] == ["stable_node", "saddle_node"]


@given(st.floats(0.0, 20.0, **finite))
def test_equilibria_are_zeros_with_jacobian_eigenvalues(nu):
    for q in classify_equilibria(nu):
        e, v = q.location
        assert abs(v * (1 - e)) < 1e-12
        assert abs(-e - v * v - nu * v) < 1e-12
        lam = np.linalg.eigvals(phase_jacobian(nu, e, v))
        assert sorted(lam, key=lambda z: (z.real, z.imag)) == pytest.approx(list(q.eigenvalues))
        if abs(nu - 2) > 1e-6 and nu > 1e-6:  # away from the degenerate cases
            assert kind_from_eigenvalues(lam) == q.kind


@given(st.floats(0.0, 5.0, **finite), st.floats(-2, 2, **finite), st.floats(-2, 2, **finite))
def test_phase_jacobian_matches_finite_difference(nu, e, v):
    f = lambda z: np.array([z[1] * (1 - z[0]), -z[0] - z[1] ** 2 - nu * z[1]])  # noqa: E731
    h = 1e-6
    J = np.column_stack([(f([e + h, v]) - f([e - h, v])) / (2 * h), (f([e, v + h]) - f([e, v - h])) / (2 * h)])
    assert np.allclose(J, phase_jacobian(nu, e, v), atol=1e-6)


def test_separatrix_without_friction_is_delta_zero_curve():
    sep = trace_boundary_rays(0.0, SeparatrixOptions(n_rays=90, tol=1e-5))
    pts = sep.points
    assert len(pts) > 30
    e, v = pts[:, 0], pts[:, 1]
    assert np.max(np.abs(delta(v, e))) < 1e-3


@pytest.mark.parametrize("nu", [3.0, 10.0])
def test_strong_friction_boundary_is_line_e_equals_one(nu):
    sep = trace_separatrix(nu, SeparatrixOptions(n_rays=120))
    manifold = sep.curves[0]
    assert np.allclose(manifold[:, 0], 1.0, atol=1e-9)
    # ray bisection classifies with a finite horizon, so it sits slightly on the e > 1 side
    pts = sep.points
    inside = (np.abs(pts[:, 0]) <= 2) & (np.abs(pts[:, 1]) <= 2)
    assert inside.sum() > 10
    assert np.allclose(pts[inside, 0], 1.0, atol=1e-2)
    assert smoothness_membership(nu, 0.0, 0.9)
    assert not smoothness_membership(nu, 0.0, 1.1)
