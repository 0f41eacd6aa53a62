"""Acceptance criteria 1-11, one test each; a PASS/FAIL line per criterion is
printed in the terminal summary.

Every numeric threshold below is the criterion's own tolerance.
"""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import band_limited, report_criterion
from qhdlab.cli import main as cli_main
from qhdlab.config import load_config, parse_config
from qhdlab.experiments import initial_from_config, preset_balance, preset_decay, preset_relaxation, sl_params
from qhdlab.functionals import check_log_embedding, check_log_sobolev, check_logH2
from qhdlab.madelung import PressureLaw, extract_hydro, hydro_state, lift_wavefunction
from qhdlab.qdd_solver import QDDParams, run_qdd
from qhdlab.sl_solver import picard_solve, run_sl
from qhdlab.spectral import TorusGrid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
N = 64


def grid():
    return TorusGrid(N, N)


class Checks:
    """Collects named sub-checks so that one line summarises a criterion."""

    def __init__(self):
        self.items = []

    def add(self, name, ok, value=""):
        self.items.append((name, bool(ok), value))

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.items)

    def detail(self):
        return "; ".join(f"{n}={'ok' if ok else 'FAILED'}{' ' + str(v) if v != '' else ''}" for n, ok, v in self.items)


def conclude(number, checks):
    report_criterion(number, checks.ok, checks.detail())
    assert checks.ok, checks.detail()


# 1 ---------------------------------------------------------------- spectral
def test_criterion_01_spectral_substrate():
    g = grid()
    x1, x2 = g.coords()
    c = Checks()
    poisson, parseval, deriv = 0.0, 0.0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        rhs = band_limited(g, rng, band=10)
        V = g.solve_poisson(rhs)
        poisson = max(poisson, float(np.max(np.abs(-g.laplacian(V) - rhs))))
        f = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        e = np.mean(np.abs(f) ** 2)
        parseval = max(parseval, abs(e - np.sum(np.abs(g.spectral(f)) ** 2)) / e)
        j1, j2 = rng.integers(-N // 3, N // 3 + 1, size=2)
        k1, k2 = 2 * np.pi * j1, 2 * np.pi * j2
        arg = 2 * np.pi * (j1 * x1 + j2 * x2) + rng.uniform(0, 2 * np.pi)
        mode = np.cos(arg)
        d1, d2 = g.gradient(mode)
        kk = k1**2 + k2**2
        # errors relative to the exact derivative's amplitude
        kmax = max(abs(k1), abs(k2), 1.0)
        errs = [
            np.max(np.abs(d1 + k1 * np.sin(arg))) / kmax,
            np.max(np.abs(d2 + k2 * np.sin(arg))) / kmax,
            np.max(np.abs(g.laplacian(mode) + kk * mode)) / max(kk, 1.0),
        ]
        deriv = max(deriv, *errs)
    c.add("poisson", poisson < 1e-12, f"{poisson:.2e}")
    c.add("parseval", parseval < 1e-12, f"{parseval:.2e}")
    c.add("single_mode_derivatives", deriv < 1e-12, f"{deriv:.2e}")
    conclude(1, c)


# 2 ---------------------------------------------------------------- madelung
def test_criterion_02_madelung_roundtrip():
    g, law = grid(), PressureLaw()
    c = Checks()
    rt, polar = 0.0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        # random states whose wave function is resolved on 64^2
        rho = 1.0 + band_limited(g, rng, band=3, amplitude=0.4)
        phi = band_limited(g, rng, band=3, amplitude=0.2)
        state = hydro_state(g, rho, g.gradient(phi), law)
        w = lift_wavefunction(state, float(rng.uniform(-3, 3)), delta=0.25)
        back = extract_hydro(w, law, 0.25)
        rt = max(rt, g.norm(back.rho - rho), g.norm(back.v[0] - state.v[0]), g.norm(back.v[1] - state.v[1]))
        p1, p2 = g.gradient(w.psi)
        s1, s2 = g.gradient(np.sqrt(rho))
        lhs = np.abs(p1) ** 2 + np.abs(p2) ** 2
        rhs = s1**2 + s2**2 + rho * (state.v[0] ** 2 + state.v[1] ** 2)
        polar = max(polar, g.norm(lhs - rhs))
    c.add("roundtrip_L2", rt < 1e-8, f"{rt:.2e}")
    c.add("polar_identity_L2", polar < 1e-8, f"{polar:.2e}")
    conclude(2, c)


# 3 -------------------------------------------------------------------- mass
def test_criterion_03_mass_conservation():
    cfg = load_config(CONFIGS / "balance.toml")
    init = initial_from_config(cfg)
    tr = run_sl(init.wave, sl_params(cfg, t_end=2.0, monitor_every=100))
    m = tr.column("mass")
    drift = float(np.max(np.abs(m - m[0])) / m[0])
    c = Checks()
    c.add("completed", tr.status == "completed")
    c.add("relative_mass_drift", drift < 1e-10, f"{drift:.2e}")
    conclude(3, c)


# 4, 5 ------------------------------------------------------------- balances
@pytest.fixture(scope="module")
def balance_report():
    return preset_balance(load_config(CONFIGS / "balance.toml"))


def test_criterion_04_energy_balance(balance_report):
    r = balance_report.residuals
    coarse, fine = r["energy"]
    ratio = fine / coarse
    c = Checks()
    c.add("r(5e-5)/r(1e-4)", ratio <= 0.35, f"{ratio:.3f} ({coarse:.2e} -> {fine:.2e})")
    c.add("hamiltonian_drift", r["hamiltonian_drift"] <= 1e-6, f"{r['hamiltonian_drift']:.2e}")
    conclude(4, c)


def test_criterion_05_gcp_and_entropy_balance(balance_report):
    r = balance_report.residuals
    c = Checks()
    for name in ("gcp", "entropy"):
        coarse, fine = r[name]
        order = math.log2(coarse / fine)
        c.add(f"{name}_order", order >= 0.9, f"{order:.2f}")
    c.add("entropy_estimate_shortfall", r["estimate_shortfall"] <= 1e-4, f"{r['estimate_shortfall']:.2e}")
    conclude(5, c)


# 6 ------------------------------------------------------------- inequalities
def test_criterion_06_inequality_suites():
    g, g2 = grid(), TorusGrid(2 * N, 2 * N)
    c = Checks()
    failures, worst = 0, 0.0
    for seed in range(100):
        rho = 1.0 + band_limited(g, np.random.default_rng(2000 + seed), band=4, amplitude=0.6)
        lhs, rhs, ok = check_logH2(g, rho)
        failures += not ok
        worst = max(worst, (lhs - rhs) / rhs)
    c.add("logH2_violations", failures == 0, f"{failures}/100, worst relative excess {worst:.2e}")

    scale_dev, res_dev = 0.0, 0.0
    for seed in range(10):
        # one trigonometric polynomial, sampled on both grids
        rng = np.random.default_rng(3000 + seed)
        u2 = band_limited(g2, rng, band=4)
        w2 = 1.5 + band_limited(g2, rng, band=4)
        u, w = u2[::2, ::2].copy(), w2[::2, ::2].copy()
        u -= np.mean(u)
        e0, s0 = check_log_embedding(g, u), check_log_sobolev(g, w)
        for lam in (1e-3, 0.1, 10.0, 1e3):
            scale_dev = max(scale_dev, abs(check_log_embedding(g, lam * u) / e0 - 1),
                            abs(check_log_sobolev(g, lam * w) / s0 - 1))
        res_dev = max(res_dev, abs(check_log_embedding(g2, u2) / e0 - 1), abs(check_log_sobolev(g2, w2) / s0 - 1))
    c.add("scale_invariance", scale_dev <= 1e-12, f"{scale_dev:.2e}")
    c.add("resolution_stability", res_dev <= 0.05, f"{res_dev:.2e}")
    conclude(6, c)


# 7 ------------------------------------------------------------------ picard
def test_criterion_07_picard_contraction():
    cfg = load_config(CONFIGS / "balance.toml")
    init = initial_from_config(cfg)
    p = sl_params(cfg, monitor_every=10**9)
    res, ratios = picard_solve(init.wave, p, T_star=p.tau / 8, tol=1e-10)
    direct = run_sl(init.wave, replace(p, t_end=p.tau / 8)).final
    gap = grid().h2_norm(res.waves[-1].psi - direct.psi)
    q = max(ratios)
    c = Checks()
    c.add("converged", res.converged, f"{len(res.diffs)} iterations, last d={res.diffs[-1]:.1e}")
    c.add("contraction", q < 1, f"q={q:.3f}")
    c.add("fixed_point_vs_driver", gap < 1e-9, f"{gap:.2e}")
    conclude(7, c)


# 8 ------------------------------------------------------------------- decay
def test_criterion_08_exponential_decay():
    rep = preset_decay(load_config(CONFIGS / "decay.toml"))
    c = Checks()
    c.add("negative_tail_slope", rep.slope < 0, f"{rep.slope:.3f}")
    c.add("r_squared", rep.r_squared > 0.95, f"{rep.r_squared:.4f}")
    for name, inc in rep.max_increase.items():
        c.add(f"{name}_nonincreasing", inc <= 1e-8, f"max rise {inc:.2e}")
    conclude(8, c)


# 9 --------------------------------------------------------------------- qdd
def test_criterion_09_qdd_solver():
    g, law = grid(), PressureLaw()
    x1, x2 = g.coords()
    c = Checks()
    const = np.ones(g.shape)
    tr = run_qdd(g, const, QDDParams(law=law, dt=1e-5, t_end=1e-2))
    c.add("constant_fixed_point", np.array_equal(tr.final, const))

    expected = -(4 * np.pi**4 + 4 * np.pi**2 + 1)
    amp, T = 1e-4, 1e-3
    tr = run_qdd(g, 1 + amp * np.cos(2 * np.pi * x1), QDDParams(law=law, dt=1e-7, t_end=T))
    rate = math.log(float(np.max(tr.final - 1)) / amp) / T
    c.add("linear_rate", abs(rate / expected - 1) <= 0.01, f"{rate:.3f} vs {expected:.3f}")

    rho0 = 1 + 0.1 * (np.cos(2 * np.pi * x1) + np.cos(2 * np.pi * x2)) + 0.05 * np.sin(2 * np.pi * (x1 + 2 * x2))
    tr = run_qdd(g, rho0, QDDParams(law=law, dt=1e-6, t_end=0.05, record_every=10, dt_schedule=((0.01, 1e-5),)))
    rise = float(np.max(np.diff(tr.entropy)))
    c.add("entropy_monotone", tr.entropy_monotone(1e-8), f"max rise {rise:.2e}")
    conclude(9, c)


# 10 ---------------------------------------------------------------- sweep
@pytest.mark.slow
def test_criterion_10_relaxation_limit():
    rep = preset_relaxation(load_config(CONFIGS / "relax.toml"))
    c = Checks()
    c.add("all_members_completed", len(rep.valid) == 4, rep.notes)
    errs = rep.sup_errors
    c.add("sup_error_strictly_decreasing", rep.errors_decreasing(), " ".join(f"{e:.3e}" for e in errs))
    fit = rep.rate()
    c.add("rate_exponent", 0.7 <= fit.slope <= 1.3, f"{fit.slope:.3f} (r2 {fit.r_squared:.4f})")
    c.add("sandwich", rep.sandwich_holds())
    for name, r in zip(("remainder_self", "remainder_cross"), rep.remainder_rates()):
        c.add(f"{name}_exponent", 1.6 <= r.slope <= 2.4, f"{r.slope:.3f}")
    conclude(10, c)


# 11 ---------------------------------------------------------- determinism
SMALL = """
[grid]
n1 = 32
n2 = 32
[physics]
tau = 0.1
taus = [0.1, 0.05, 0.025]
[integrator]
dt = 1e-3
t_end = 0.3
monitor_every = 5
horizon = 0.003
qdd_dt = 1e-5
qdd_dt_late = 1e-5
[initial]
kind = "random-band-limited"
amplitude = 0.1
phase_amplitude = 0.02
seed = 11
"""

BALANCE_SMALL = SMALL.replace("t_end = 0.3", "t_end = 0.02")


def test_criterion_11_determinism(tmp_path):
    cases = {
        "run-sl": SMALL,
        "run-qdd": SMALL.replace("t_end = 0.3", "t_end = 0.002"),
        "decay": SMALL,
        "balance": BALANCE_SMALL,
        "check-inequalities": SMALL,
        "relax-sweep": SMALL,
    }
    c = Checks()
    for cmd, text in cases.items():
        parse_config(text)
        cfg = tmp_path / f"{cmd}.toml"
        cfg.write_text(text)
        outputs = []
        for k in range(2):
            out = tmp_path / f"{cmd}_{k}"
            cli_main([cmd, "--config", str(cfg), "--out", str(out), "--quiet"])
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        same = outputs[0] == outputs[1] and len(outputs[0]) > 0
        c.add(cmd, same, f"{len(outputs[0])} files")
    conclude(11, c)
