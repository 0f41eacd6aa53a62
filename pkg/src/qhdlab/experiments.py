"""Initial data and the named experiment presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .config import RunConfig
from .functionals import AdmissibilityCheck, DecayConstants, check_admissible, record
from .madelung import (
    HydroState,
    PressureLaw,
    WaveFunction,
    check_floor,
    check_phase_compatible,
    extract_hydro,
    hydro_state,
    lift_wavefunction,
)
from .qdd_solver import QDDParams
from .relaxation import RelaxationReport, sweep, t_prime_grid
from .sl_solver import (
    SLParams,
    SLTrajectory,
    appendix_energy_residual,
    energy_balance_residual,
    entropy_balance_residual,
    entropy_balance_series,
    entropy_estimate_margin,
    gcp_balance_residual,
    run_sl,
)
from .spectral import TorusGrid

MONOTONE_SLACK = 1e-8
TAIL_START = 5.0  # tail window starts after this many relaxation times

# acceptance tolerances of the balance suite
MASS_DRIFT_TOL = 1e-10
ENERGY_RATIO_MAX = 0.35
BALANCE_ORDER_MIN = 0.9
ESTIMATE_SLACK = 1e-4
HAMILTONIAN_TOL = 1e-6
EXACT_FLOOR = 1e-14


@dataclass(frozen=True)
class InitialDataSpec:
    kind: str = "modal-perturbation"
    M0: float = 1.0
    delta: float = 0.25
    amplitude: float = 0.05
    modes: tuple = ((1, 0), (0, 1))
    phase_amplitude: float = 0.0
    phase_modes: tuple = ()
    band: int = 3
    seed: int = 0

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "InitialDataSpec":
        i, p = cfg.initial, cfg.physics
        return cls(i.kind, p.M0, p.delta, i.amplitude, i.modes, i.phase_amplitude, i.phase_modes, i.band, i.seed)


@dataclass
class InitialData:
    state: HydroState
    wave: WaveFunction
    E0: float
    I0: float
    H0: float
    admissible: AdmissibilityCheck

    def __iter__(self):
        return iter((self.state, self.wave))


def _modal(grid: TorusGrid, modes, fn) -> np.ndarray:
    x1, x2 = grid.coords()
    out = np.zeros(grid.shape)
    for j1, j2 in modes:
        out += fn(2 * np.pi * (j1 * x1 + j2 * x2))
    return out


def _random_band(grid: TorusGrid, band: int, rng: np.random.Generator) -> np.ndarray:
    x1, x2 = grid.coords()
    out = np.zeros(grid.shape)
    for j1 in range(0, band + 1):
        for j2 in range(-band, band + 1):
            if j1 == 0 and j2 <= 0:
                continue
            a, theta = rng.standard_normal(), rng.uniform(0, 2 * np.pi)
            out += a * np.cos(2 * np.pi * (j1 * x1 + j2 * x2) + theta)
    peak = float(np.max(np.abs(out)))
    return out / peak if peak > 0 else out


def _check_band(grid: TorusGrid, modes) -> None:
    for j1, j2 in modes:
        if (j1, j2) == (0, 0):
            raise ValueError("the zero mode cannot be perturbed")
        if abs(j1) > grid.n1 / 3 or abs(j2) > grid.n2 / 3:
            raise ValueError(f"mode ({j1}, {j2}) lies outside the dealiased band")


def make_initial(
    spec: InitialDataSpec,
    grid: TorusGrid,
    n: int = 1,
    epsilon: float = 0.1,
    C0_cal: float = 1.0,
) -> InitialData:
    """Density M0 + perturbation with exact mean M0 and velocity grad(phi)."""
    law = PressureLaw(n, spec.M0)
    if spec.kind == "ground":
        drho = np.zeros(grid.shape)
        phi = np.zeros(grid.shape)
    elif spec.kind == "modal-perturbation":
        _check_band(grid, spec.modes)
        _check_band(grid, spec.phase_modes)
        drho = spec.amplitude * _modal(grid, spec.modes, np.cos)
        phi = spec.phase_amplitude * _modal(grid, spec.phase_modes, np.sin)
    elif spec.kind == "random-band-limited":
        if spec.band > grid.n1 / 3 or spec.band > grid.n2 / 3:
            raise ValueError("random band exceeds the dealiased band")
        rng = np.random.default_rng(spec.seed)
        drho = spec.amplitude * _random_band(grid, spec.band, rng)
        phi = spec.phase_amplitude * _random_band(grid, spec.band, rng)
    else:
        raise ValueError(f"unknown initial data kind {spec.kind!r}")
    rho = spec.M0 + (drho - np.mean(drho))
    check_floor(rho, spec.delta, 0.0)
    v = grid.gradient(phi)
    check_phase_compatible(grid, v)
    state = hydro_state(grid, rho, v, law)
    wave = lift_wavefunction(state, 0.0, spec.delta)
    rec = record(extract_hydro(wave, law, spec.delta), wave, law)
    verdict = check_admissible(rec.energy, rec.gcp, spec.M0, spec.delta, epsilon, H0=rec.entropy, n=n, C0_cal=C0_cal)
    return InitialData(state, wave, rec.energy, rec.gcp, rec.entropy, verdict)


def _law(cfg: RunConfig) -> PressureLaw:
    return PressureLaw(cfg.physics.n, cfg.physics.M0)


def _grid(cfg: RunConfig) -> TorusGrid:
    return TorusGrid(cfg.grid.n1, cfg.grid.n2)


def initial_from_config(cfg: RunConfig, grid: Optional[TorusGrid] = None) -> InitialData:
    grid = grid or _grid(cfg)
    return make_initial(InitialDataSpec.from_config(cfg), grid, cfg.physics.n, cfg.physics.epsilon, cfg.physics.C0_cal)


def sl_params(cfg: RunConfig, **overrides) -> SLParams:
    p, i = cfg.physics, cfg.integrator
    base = SLParams(
        tau=p.tau,
        law=_law(cfg),
        delta=p.delta,
        dt=i.dt,
        t_end=i.t_end,
        dealias=i.dealias,
        monitor_every=i.monitor_every,
        pressure=p.pressure,
        electric=p.electric,
    )
    return replace(base, **overrides)


def qdd_params(cfg: RunConfig, **overrides) -> QDDParams:
    i = cfg.integrator
    schedule = ((i.qdd_switch, i.qdd_dt_late),) if i.qdd_dt_late != i.qdd_dt else ()
    base = QDDParams(law=_law(cfg), delta=cfg.physics.delta, dt=i.qdd_dt, t_end=i.t_end,
                     dealias=i.dealias, dt_schedule=schedule, record_every=1000)
    return replace(base, **overrides)


def admissibility_lines(init: InitialData) -> list[str]:
    a = init.admissible
    lines = [
        f"E0,{init.E0:.17g}",
        f"I0,{init.I0:.17g}",
        f"H0,{init.H0:.17g}",
        f"smallness_lhs,{a.lhs:.17g}",
        f"smallness_rhs,{a.rhs:.17g}",
        f"admissible,{a.ok}",
    ]
    if a.dep_lhs is not None:
        lines += [f"log_condition_lhs,{a.dep_lhs:.17g}", f"log_condition_rhs,{a.dep_rhs:.17g}"]
    return lines


# --------------------------------------------------------------------- decay
@dataclass
class DecayReport:
    trajectory: SLTrajectory
    init: InitialData
    c1: float
    tau_star: float
    degenerate: bool
    slope: float = math.nan
    intercept: float = math.nan
    r_squared: float = math.nan
    max_increase: dict = field(default_factory=dict)
    envelope_C0: float = math.nan
    envelope_c2: float = math.nan
    notes: list[str] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return all(v <= MONOTONE_SLACK for v in self.max_increase.values())

    @property
    def passed(self) -> bool:
        if self.degenerate:
            return self.trajectory.status == "completed"
        return self.slope < 0 and self.r_squared > 0.95 and self.monotone

    def lines(self) -> list[str]:
        out = [f"status,{self.trajectory.status}", f"degenerate,{self.degenerate}",
               f"c1,{self.c1:.17g}", f"tau_star,{self.tau_star:.17g}",
               f"tail_slope,{self.slope:.17g}", f"tail_intercept,{self.intercept:.17g}",
               f"r_squared,{self.r_squared:.17g}"]
        for name, inc in self.max_increase.items():
            out.append(f"max_increase_{name},{inc:.17g}")
        out += [f"envelope_C0,{self.envelope_C0:.17g}", f"envelope_c2,{self.envelope_c2:.17g}"]
        out += admissibility_lines(self.init)
        out += [f"note,{n}" for n in self.notes]
        out.append(f"pass,{self.passed}")
        return out


def analyse_decay(traj: SLTrajectory, init: InitialData, c1: float, tau_star: float, degenerate: bool) -> DecayReport:
    rep = DecayReport(traj, init, c1, tau_star, degenerate)
    tau = traj.params.tau
    t = traj.times
    H, E, I = traj.column("entropy"), traj.column("energy"), traj.column("gcp")
    F = H + E + c1 * I
    if degenerate:
        rep.notes.append("ground state: F vanishes identically, no decay fit")
        return rep
    tail = t >= TAIL_START * tau
    if tail.sum() < 3:
        rep.notes.append("tail window [5 tau, T] holds fewer than 3 records")
        return rep
    fit = stats.linregress(t[tail], np.log(F[tail]))
    rep.slope, rep.intercept, rep.r_squared = float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
    for name, series in (("H", H), ("E", E), ("I", I)):
        rep.max_increase[name] = float(np.max(np.diff(series[tail])))
    # envelope in the form F <= F0 exp(C0/tau int int rho|v|^2 - c2 tau t):
    # c2 from the tail slope, C0 the smallest value making the bound hold
    rep.envelope_c2 = -rep.slope / tau
    cum = traj.column("cum_diss_v")
    excess = np.log(F / F[0]) + rep.envelope_c2 * tau * t
    pos = cum > 0
    need = excess[pos] * tau / cum[pos]
    rep.envelope_C0 = float(max(0.0, np.max(need))) if need.size else 0.0
    if tau > tau_star:
        rep.notes.append(f"tau={tau:g} exceeds tau_star={tau_star:.3e} from the decay constants")
    return rep


def preset_decay(cfg: RunConfig) -> DecayReport:
    grid = _grid(cfg)
    init = initial_from_config(cfg, grid)
    params = sl_params(cfg)
    traj = run_sl(init.wave, params)
    degenerate = init.E0 <= 0.0 and init.H0 <= 0.0
    if degenerate:
        c1, tau_star = params.c1, math.nan
    else:
        k = DecayConstants.from_data(cfg.physics.M0, init.E0, cfg.physics.delta, cfg.physics.n, cfg.physics.C0_cal)
        c1, tau_star = k.c1, k.tau_star
    return analyse_decay(traj, init, c1, tau_star, degenerate)


# ------------------------------------------------------------------- balance
@dataclass
class BalanceRow:
    name: str
    value: float
    limit: float
    kind: str  # "max" (value <= limit) or "min" (value >= limit)

    @property
    def passed(self) -> bool:
        if self.kind == "max":
            return self.value <= self.limit
        return self.value >= self.limit


@dataclass
class BalanceReport:
    rows: list[BalanceRow]
    residuals: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def lines(self) -> list[str]:
        out = ["check,value,limit,kind,pass"]
        out += [f"{r.name},{r.value:.17g},{r.limit:.17g},{r.kind},{r.passed}" for r in self.rows]
        return out


def observed_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """log_ratio(coarse / fine); infinite when both sit at roundoff level."""
    if coarse <= EXACT_FLOOR and fine <= EXACT_FLOOR:
        return math.inf
    if fine <= 0.0:
        return math.inf
    return math.log(coarse / fine) / math.log(ratio)


def _estimate_slack(traj: SLTrajectory) -> float:
    """Worst relative shortfall of the one-sided entropy estimate (0 when it holds)."""
    margin = entropy_estimate_margin(traj)
    _, scale = entropy_balance_series(traj)
    return float(max(0.0, -np.min(margin[1:-1]) / scale))


def preset_balance(cfg: RunConfig) -> BalanceReport:
    grid = _grid(cfg)
    init = initial_from_config(cfg, grid)
    scale = cfg.integrator.tolerance_scale
    dt = cfg.integrator.dt
    runs = []
    for h in (dt, dt / 2):
        p = sl_params(cfg, dt=h, monitor_every=1, diagnostics=True)
        runs.append(run_sl(init.wave, p))
    coarse, fine = runs
    mass = fine.column("mass")
    res = {
        "mass_drift": float(np.max(np.abs(mass - mass[0])) / mass[0]),
        "energy": (energy_balance_residual(coarse), energy_balance_residual(fine)),
        "gcp": (gcp_balance_residual(coarse), gcp_balance_residual(fine)),
        "entropy": (entropy_balance_residual(coarse), entropy_balance_residual(fine)),
        "appendix_energy": (appendix_energy_residual(coarse), appendix_energy_residual(fine)),
        "estimate_shortfall": max(_estimate_slack(coarse), _estimate_slack(fine)),
    }
    ham = run_sl(init.wave, sl_params(cfg, tau=math.inf, dt=dt, t_end=1.0, monitor_every=10))
    E = ham.column("energy")
    res["hamiltonian_drift"] = float(np.max(np.abs(E - E[0])))

    e_c, e_f = res["energy"]
    energy_ratio = 0.0 if e_c <= EXACT_FLOOR and e_f <= EXACT_FLOOR else e_f / e_c
    rows = [
        BalanceRow("mass_drift", res["mass_drift"], MASS_DRIFT_TOL * scale, "max"),
        BalanceRow("energy_ratio", energy_ratio, ENERGY_RATIO_MAX * scale, "max"),
        BalanceRow("gcp_order", observed_order(*res["gcp"]), BALANCE_ORDER_MIN / scale if scale else math.inf, "min"),
        BalanceRow("entropy_order", observed_order(*res["entropy"]), BALANCE_ORDER_MIN / scale if scale else math.inf, "min"),
        BalanceRow("estimate_shortfall", res["estimate_shortfall"], ESTIMATE_SLACK * scale, "max"),
        BalanceRow("hamiltonian_drift", res["hamiltonian_drift"], HAMILTONIAN_TOL * scale, "max"),
    ]
    return BalanceReport(rows, res)


# ---------------------------------------------------------------- relaxation
def preset_relaxation(cfg: RunConfig) -> RelaxationReport:
    grid = _grid(cfg)
    init = initial_from_config(cfg, grid)
    i = cfg.integrator
    tp = t_prime_grid(i.horizon)
    template = sl_params(cfg, monitor_every=i.monitor_every)
    return sweep(init.state.rho, cfg.physics.taus, tp, template, qdd_params(cfg, t_end=i.horizon), grid,
                 workers=i.workers)
