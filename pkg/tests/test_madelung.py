import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhdlab.errors import NonZeroCirculation, NotIrrotational, VacuumBreach
from qhdlab.madelung import (
    PressureLaw,
    chemical_potential_hydro,
    evolve_mean_phase,
    extract_hydro,
    hydro_state,
    lift_wavefunction,
    sigma_hydro,
)
from qhdlab.spectral import TorusGrid

from conftest import band_limited


def random_state(grid, law, seed):
    # sqrt(rho) exp(i phi) is not band-limited; keep its tail below roundoff on 64^2
    rng = np.random.default_rng(seed)
    rho = 1.0 + band_limited(grid, rng, band=2, amplitude=0.4)
    phi = band_limited(grid, rng, band=2, amplitude=0.2)
    return hydro_state(grid, rho, grid.gradient(phi), law)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_extract_inverts_lift(seed, s_star):
    g, law = TorusGrid(64, 64), PressureLaw()
    state = random_state(g, law, seed)
    w = lift_wavefunction(state, s_star)
    back = extract_hydro(w, law)
    assert g.norm(back.rho - state.rho) < 1e-8
    assert g.norm(back.v[0] - state.v[0]) < 1e-8
    assert g.norm(back.v[1] - state.v[1]) < 1e-8
    assert w.mean_phase == s_star


def test_mu_and_sigma_agree_between_wave_and_fluid_forms(grid64, law):
    state = random_state(grid64, law, 11)
    w = lift_wavefunction(state)
    wave = extract_hydro(w, law)
    assert np.max(np.abs(wave.mu - chemical_potential_hydro(state, law))) < 1e-8
    assert np.max(np.abs(wave.sigma - sigma_hydro(state))) < 1e-8


def test_vacuum_rejected(grid32):
    law = PressureLaw(1, 0.05)
    rho = np.full(grid32.shape, 0.05)
    state = hydro_state(grid32, rho, (0 * rho, 0 * rho), law)
    with pytest.raises(VacuumBreach):
        lift_wavefunction(state, delta=0.1)


def test_rotational_velocity_rejected(grid32, law):
    x1, x2 = grid32.coords()
    v = (np.sin(2 * np.pi * x2), np.zeros(grid32.shape))
    with pytest.raises(NotIrrotational):
        lift_wavefunction(hydro_state(grid32, np.ones(grid32.shape), v, law))


def test_winding_velocity_rejected(grid32, law):
    v = (np.ones(grid32.shape), np.zeros(grid32.shape))
    with pytest.raises(NonZeroCirculation):
        lift_wavefunction(hydro_state(grid32, np.ones(grid32.shape), v, law))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pressure_law_relations(n):
    law = PressureLaw(n, 1.3)
    r = np.linspace(0.3, 2.5, 50)
    h = 1e-6
    fpp = (law.fprime(r + h) - law.fprime(r - h)) / (2 * h)
    assert np.allclose(law.p(r), r * law.fprime(r) - law.f(r), rtol=0, atol=1e-14)
    assert np.allclose(law.pprime(r), r * fpp, rtol=1e-7, atol=1e-9)


def test_mean_phase_pure_relaxation():
    assert evolve_mean_phase(2.0, 0.0, 0.5, 0.1) == pytest.approx(2.0 * math.exp(-0.2), rel=1e-15)


def test_mean_phase_without_relaxation():
    assert evolve_mean_phase(2.0, 3.0, math.inf, 0.1) == pytest.approx(2.0 - 0.3, rel=1e-15)


def test_mean_phase_fixed_point():
    # S = -tau * mu is stationary for dS/dt = -mu - S/tau
    assert evolve_mean_phase(-0.5 * 4.0, 4.0, 0.5, 0.3) == pytest.approx(-2.0, rel=1e-14)
