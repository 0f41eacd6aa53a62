import math

import numpy as np
import pytest

from qhdlab import relaxation as rlx
from qhdlab.errors import DegenerateData, HorizonTooShort
from qhdlab.madelung import WaveFunction
from qhdlab.qdd_solver import QDDParams
from qhdlab.sl_solver import SLParams, run_sl


def modal_rho(grid, amp=0.05):
    x1, x2 = grid.coords()
    return 1 + amp * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2))


def test_t_prime_grid_shape():
    t = rlx.t_prime_grid(0.5)
    assert t[0] == 0.0 and t[-1] == 0.5
    assert np.all(np.diff(t) > 0)
    assert np.allclose(np.diff(t[t <= 1e-3]), 1e-5)
    assert np.allclose(np.diff(t[t >= 1e-2]), 1e-3)


def test_fit_rate_exact_power_laws():
    taus = np.array([0.1, 0.05, 0.025, 0.0125])
    s, _, r2 = rlx.fit_rate(taus, 0.7 * taus)
    assert s == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    fit = rlx.fit_rate(taus, 0.3 * taus**2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(0.3), abs=1e-12)


def test_fit_rate_degenerate():
    with pytest.raises(DegenerateData):
        rlx.fit_rate([0.1, 0.05, 0.025], [1e-3, 0.0, 1e-4])
    with pytest.raises(DegenerateData):
        rlx.fit_rate([0.1, 0.05], [1e-3, 5e-4])


def _traj(grid, law, tau, t_end, steps, rho=None):
    rho = modal_rho(grid) if rho is None else rho
    psi0 = WaveFunction(np.sqrt(rho).astype(complex), grid)
    return run_sl(psi0, SLParams(tau=tau, law=law, dt=1e-3, t_end=t_end, monitor_every=10), steps)


def test_rescale_with_unit_tau_is_identity(grid32, law):
    tr = _traj(grid32, law, 1.0, 0.02, [0, 10, 20])
    rs = rlx.rescale(tr, 1.0, [0.0, 0.01, 0.02])
    for (t, w), rho in zip(tr.checkpoints, rs.rho):
        assert np.allclose(rho, np.abs(w.psi) ** 2, rtol=1e-14, atol=0)


def test_rescale_divides_velocity_and_keeps_mass(grid32, law):
    tau = 0.5
    tr = _traj(grid32, law, tau, 0.02, [0, 10, 20])
    rs = rlx.rescale(tr, tau, [0.0, 0.005, 0.01])
    ref = rlx.rescale(tr, 1.0, [0.0, 0.01, 0.02])
    for a, b in zip(rs.v, ref.v):
        assert np.allclose(a[0], b[0] / tau, rtol=0, atol=1e-14)
    for rho in rs.rho:
        assert np.mean(rho) == pytest.approx(1.0, abs=1e-14)


def test_rescale_horizon_too_short(grid32, law):
    tr = _traj(grid32, law, 0.5, 0.01, [0, 10])
    with pytest.raises(HorizonTooShort):
        rlx.rescale(tr, 0.5, [0.0, 0.01])


def test_ground_state_sweep_has_zero_errors(grid32, law):
    tp = rlx.t_prime_grid(0.002, (1e-3,), (2e-4, 5e-4))
    rep = rlx.sweep(np.ones(grid32.shape), [0.1, 0.05, 0.025], tp, SLParams(law=law, dt=1e-3),
                    QDDParams(law=law, dt=1e-5, record_every=1000), grid32)
    for m in rep.members:
        assert m.ok
        assert np.all(m.error == 0.0)
        assert np.all(m.relent == 0.0)
        for g in rlx.GROUPS:
            assert np.all(m.balance.groups[g] == 0.0)
    with pytest.raises(DegenerateData):
        rep.rate()


def test_vacuum_breach_member_is_excluded(grid32, law, monkeypatch):
    real = rlx.run_sl

    def failing(psi0, params, steps=None):
        tr = real(psi0, params, steps)
        if params.tau == 0.05:
            tr.status, tr.breach_time = "vacuum_breach", 0.0
        return tr

    monkeypatch.setattr(rlx, "run_sl", failing)
    tp = rlx.t_prime_grid(0.002, (1e-3,), (2e-4, 5e-4))
    rep = rlx.sweep(modal_rho(grid32), [0.1, 0.05, 0.025, 0.0125], tp, SLParams(law=law, dt=2.5e-4),
                    QDDParams(law=law, dt=1e-5, record_every=1000), grid32)
    assert [m.tau for m in rep.valid] == [0.1, 0.025, 0.0125]
    assert any("0.05" in n and "excluded" in n for n in rep.notes)
    assert "vacuum_breach" in rep.summary()


def test_first_sample_error_is_zero_and_report_written(grid32, law, tmp_path):
    tp = rlx.t_prime_grid(0.002, (1e-3,), (2e-4, 5e-4))
    rep = rlx.sweep(modal_rho(grid32), [0.1, 0.05, 0.025], tp, SLParams(law=law, dt=2.5e-4),
                    QDDParams(law=law, dt=1e-5, record_every=1000), grid32)
    for m in rep.members:
        assert m.error[0] == 0.0
        assert np.all(m.error >= 0) and np.all(m.relent >= 0)
    assert rep.sandwich_holds()
    files = {p.name for p in rep.write(tmp_path)}
    assert "rlx_summary.txt" in files
    assert "rlx_tau0.05_error.csv" in files
    assert "slope," in (tmp_path / "rlx_summary.txt").read_text()


def test_taus_must_decrease(grid32, law):
    with pytest.raises(ValueError):
        rlx.sweep(modal_rho(grid32), [0.05, 0.1], [0.0, 0.001], SLParams(law=law), QDDParams(law=law), grid32)


def _balance_residual(grid, law, refine):
    tp = rlx.t_prime_grid(0.01, (1e-3,), (1e-4 / refine, 2e-4 / refine))
    rep = rlx.sweep(modal_rho(grid), [0.1], tp, SLParams(law=law, dt=1e-4 / refine, monitor_every=10),
                    QDDParams(law=law, dt=1e-6 / refine, record_every=10**6), grid)
    return rep.members[0].balance.residual


def test_relative_entropy_identity_converges_under_refinement(grid64, law):
    coarse = _balance_residual(grid64, law, 1)
    fine = _balance_residual(grid64, law, 2)
    assert math.log2(coarse / fine) >= 0.8
