import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coldplasma.characteristics import lagrangian_map
from coldplasma.state import ConfigError, Grid1D, make_initial_data
from coldplasma.stochastic import (BLOCK, ParticleEnsemble, batch_residual_floor, convergence_study,
                                   estimate_moments, eulerian_reference, evolve, gaussian_density, init_ensemble, load_checkpoint, moment_residual,
                                   plateau_density, save_checkpoint, silverman_bandwidth, standard_normals,
                                   step_ensemble, uniform_density)

GRID = Grid1D(-10.0, 10.0, 800)
INIT = make_initial_data("laser_pulse", a=0.3)


def ensemble(N=20_000, sigma=0.1, seed=5, f0=None):
    return init_ensemble(INIT, f0 or plateau_density(7.0), N, sigma, seed, GRID)


@given(st.integers(0, 2 ** 32), st.integers(0, 1000), st.integers(1, 3))
def test_normals_are_addressable_by_block(seed, step, k):
    n = 3 * BLOCK + 17
    full = standard_normals(seed, step, n)
    lo = k * BLOCK if k < 3 else 2 * BLOCK
    assert np.array_equal(standard_normals(seed, step, n, lo, n), full[lo:])


def test_normals_have_unit_moments():
    z = standard_normals(11, 3, 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
    assert abs(np.mean(z ** 4) - 3) < 0.05


def test_init_sets_fields_exactly_and_samples_density():
    ens = ensemble(N=50_000, f0=gaussian_density(1.5, 0.5))
    assert np.array_equal(ens.V, INIT.V0(ens.X)) and np.array_equal(ens.E, INIT.E0(ens.X))
    assert abs(ens.X.mean() - 0.5) < 0.03 and abs(ens.X.std() - 1.5) < 0.03


@pytest.mark.parametrize("kw", [dict(N=10), dict(f0=lambda x: 2 * plateau_density(7.0)(x)),
                                dict(f0=lambda x: -plateau_density(7.0)(x))])
def test_init_validates(kw):
    with pytest.raises(ConfigError):
        ensemble(**kw)


def test_uniform_density_is_a_density():
    f = uniform_density(2.0)(GRID.x)
    assert np.sum(f) * GRID.spacing == pytest.approx(1.0, abs=2e-2)


def test_arrays_are_read_only():
    ens = ensemble(N=1000)
    with pytest.raises(ValueError):
        ens.X[0] = 1.0
    with pytest.raises(ConfigError):
        ParticleEnsemble(ens.X, ens.V[:-1], ens.E, 0.1, 1)


def test_noise_free_paths_follow_characteristics():
    ens = ensemble(N=2000, sigma=0.0)
    x0 = ens.X.copy()
    dt = 1e-3
    out = evolve(ens, 1.0, dt)
    x, V, E, _ = lagrangian_map(INIT, x0, 1.0)
    assert np.max(np.abs(out.V - V)) < 1e-12 and np.max(np.abs(out.E - E)) < 1e-12
    assert np.max(np.abs(out.X - x)) < 2 * dt  # first order in X


def test_rotation_conserves_invariant():
    ens = ensemble(N=5000, sigma=0.3)
    r0 = ens.V ** 2 + ens.E ** 2
    out = evolve(ens, 10.0, 0.01)
    assert np.max(np.abs(out.V ** 2 + out.E ** 2 - r0)) < 1e-14


def test_step_is_independent_of_workers():
    ens = ensemble(N=3 * BLOCK + 5)
    a, b = step_ensemble(ens, 0.01, workers=1), step_ensemble(ens, 0.01, workers=3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.V, b.V)
    assert a.step == 1 and a.t == pytest.approx(0.01)


def test_evolve_lands_on_checkpoints():
    seen = []
    evolve(ensemble(N=1000), 1.0, 0.03, checkpoints=[0.25, 0.5], callback=lambda e: seen.append(e.t))
    assert seen == [0.25, 0.5]


def test_kde_recovers_gaussian_density_and_constant_mean():
    N = 200_000
    ens = init_ensemble(make_initial_data("zero"), gaussian_density(1.0), N, 0.0, 3, GRID)
    ens = ParticleEnsemble(ens.X, np.full(N, 0.7), ens.E, 0.0, 3)
    m = estimate_moments(ens, GRID, bandwidth=0.2)
    exact = np.exp(-0.5 * GRID.x ** 2 / (1 + 0.2 ** 2)) / math.sqrt(2 * math.pi * (1 + 0.2 ** 2))
    assert np.max(np.abs(m.rho - exact)) < 0.01
    assert m.mass == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(m.Vhat[m.defined], 0.7)


def test_silverman_scales_like_n_to_minus_one_fifth():
    z = standard_normals(1, 0, 100_000)
    assert silverman_bandwidth(z) == pytest.approx(0.9 * 100_000 ** -0.2, rel=0.02)


def test_checkpoint_round_trip(tmp_path):
    ens = evolve(ensemble(N=1500), 0.1, 0.05)
    p = tmp_path / "e.bin"
    save_checkpoint(ens, p)
    back = load_checkpoint(p)
    assert np.array_equal(back.X, ens.X) and back.step == ens.step and back.t == ens.t
    save_checkpoint(back, tmp_path / "f.bin")
    assert p.read_bytes() == (tmp_path / "f.bin").read_bytes()


def test_continuity_residual_at_sampling_floor():
    # the estimates are linear in particle sums, so the full residual is the mean of the batch residuals
    init = make_initial_data("gaussian_v", a=0.5)
    ens0 = init_ensemble(init, gaussian_density(1.5), 100_000, 0.2, 9, GRID)
    ens1 = evolve(ens0, 0.02, 0.002)
    m0, m1 = estimate_moments(ens0, GRID, 0.3, floor=0.0), estimate_moments(ens1, GRID, 0.3, floor=0.0)
    res = moment_residual(m0, m1, 0.2)
    floor = batch_residual_floor(ens0, ens1, GRID, 0.3)
    rate = np.abs(m1.rho - m0.rho) / 0.02
    assert np.sqrt(np.mean(res ** 2)) < 3 * np.sqrt(np.mean(floor ** 2)) + 0.05 * np.max(rate)


def test_reference_refuses_after_crossing():
    blow = make_initial_data("laser_pulse", a=0.75)
    with pytest.raises(ValueError):
        eulerian_reference(blow, 3.0, GRID.x)
    with pytest.raises(ValueError):
        convergence_study(blow, [0.1], 2000, [3.0])
