import math
from dataclasses import replace

import numpy as np
import pytest

from qhdlab.config import parse_config
from qhdlab.errors import VacuumBreach
from qhdlab.experiments import (
    InitialDataSpec,
    make_initial,
    observed_order,
    preset_balance,
    preset_decay,
    preset_relaxation,
)
from qhdlab.functionals import energy_parts
from qhdlab.madelung import PressureLaw, hydro_state
from qhdlab.spectral import TorusGrid


def test_ground_initial_data(grid32):
    init = make_initial(InitialDataSpec(kind="ground"), grid32, epsilon=0.5)
    assert init.E0 == 0.0 and init.I0 == 0.0
    assert np.all(init.state.rho == 1.0)
    assert init.admissible.ok


def test_modal_energy_resolution_crosscheck():
    spec = InitialDataSpec(kind="modal-perturbation", amplitude=0.2, modes=((1, 0),))
    law = PressureLaw()
    coarse = make_initial(spec, TorusGrid(64, 64))
    fine_grid = TorusGrid(128, 128)
    x1, _ = fine_grid.coords()
    rho = 1 + 0.2 * np.cos(2 * np.pi * x1)
    state = hydro_state(fine_grid, rho, (0 * rho, 0 * rho), law)
    assert coarse.E0 == pytest.approx(sum(energy_parts(state, law)), abs=1e-8)


def test_random_kind_is_deterministic(grid32):
    spec = InitialDataSpec(kind="random-band-limited", amplitude=0.3, phase_amplitude=0.1, seed=42)
    a, b = make_initial(spec, grid32), make_initial(spec, grid32)
    assert a.state.rho.tobytes() == b.state.rho.tobytes()
    assert a.wave.psi.tobytes() == b.wave.psi.tobytes()
    assert make_initial(replace(spec, seed=43), grid32).state.rho.tobytes() != a.state.rho.tobytes()


def test_initial_state_invariants(grid32):
    spec = InitialDataSpec(kind="random-band-limited", amplitude=0.4, phase_amplitude=0.2, seed=3)
    init = make_initial(spec, grid32)
    assert np.mean(init.state.rho) == pytest.approx(1.0, abs=1e-14)
    assert np.min(init.state.rho) >= spec.delta
    assert np.max(np.abs(grid32.curl(*init.state.v))) < 1e-10


def test_out_of_band_mode_rejected(grid32):
    with pytest.raises(ValueError):
        make_initial(InitialDataSpec(modes=((11, 0),)), grid32)


def test_floor_violation_rejected(grid32):
    with pytest.raises(VacuumBreach):
        make_initial(InitialDataSpec(amplitude=0.4, delta=0.3), grid32)


def test_observed_order():
    assert observed_order(4e-6, 1e-6) == pytest.approx(2.0)
    assert observed_order(0.0, 0.0) == math.inf


GROUND = """
[grid]
n1 = 16
n2 = 16
[integrator]
dt = 1e-3
t_end = 0.02
monitor_every = 1
[initial]
kind = "ground"
"""


def test_ground_balance_preset_passes():
    rep = preset_balance(parse_config(GROUND))
    assert rep.passed
    assert rep.residuals["mass_drift"] == 0.0


def test_zero_tolerance_forces_failure_table():
    text = GROUND.replace('kind = "ground"', 'kind = "modal-perturbation"').replace(
        "monitor_every = 1", "monitor_every = 1\ntolerance_scale = 0.0")
    rep = preset_balance(parse_config(text))
    assert not rep.passed
    assert any(line.endswith(",False") for line in rep.lines()[1:])


def test_ground_decay_preset_is_degenerate():
    rep = preset_decay(parse_config(GROUND))
    assert rep.degenerate and rep.passed
    assert any("ground state" in n for n in rep.notes)


def test_ground_relaxation_preset_zero_errors():
    text = GROUND + "[physics]\ntaus = [0.1, 0.05, 0.025]\n"
    text = text.replace("t_end = 0.02", "t_end = 0.02\nhorizon = 0.002\nqdd_dt = 1e-5\nqdd_dt_late = 1e-5")
    rep = preset_relaxation(parse_config(text))
    assert all(m.sup_error == 0.0 for m in rep.members)
