"""Relaxation-time laboratory: parabolic rescaling, tau sweeps and rate fits.

Rescaled variables use t' = tau t, rho_tau(t') = rho(t'/tau) and
v_tau(t') = v(t'/tau)/tau.  Every SL run of a sweep is compared with one QDD
run on a common t' grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateData, HorizonTooShort
from .functionals import log_sqrt_hessian, relative_entropy
from .madelung import PressureLaw, WaveFunction, extract_hydro
from .qdd_solver import QDDParams, QDDTrajectory, consistent_momentum, run_qdd, time_derivative
from .sl_solver import SLParams, SLTrajectory, run_sl
from .spectral import TorusGrid

SANDWICH_SLACK = 1e-12
ENERGY_HYPOTHESIS_TOL = 1e-3
LAYER_END = 0.1

GROUPS = ("hessian", "curvature", "pressure", "poisson", "remainder_self", "remainder_cross")


def t_prime_grid(
    horizon: float = 0.5,
    breaks: Sequence[float] = (1e-3, 1e-2),
    spacings: Sequence[float] = (1e-5, 1e-4, 1e-3),
) -> np.ndarray:
    """Piecewise uniform grid on [0, horizon], fine near 0 to resolve the initial layer."""
    if len(spacings) != len(breaks) + 1:
        raise ValueError("need one spacing per segment")
    edges = [0.0] + [b for b in breaks if b < horizon] + [horizon]
    pieces = []
    for a, b, h in zip(edges[:-1], edges[1:], spacings):
        n = max(1, int(round((b - a) / h)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    pieces.append(np.array([horizon]))
    return np.concatenate(pieces)


# ----------------------------------------------------------------- rescaling
@dataclass
class RescaledTrajectory:
    tau: float
    grid: TorusGrid
    law: PressureLaw
    times: np.ndarray
    rho: list[np.ndarray]
    v: list[tuple[np.ndarray, np.ndarray]]


def rescale(traj: SLTrajectory, tau: float, t_prime: Sequence[float], grid: Optional[TorusGrid] = None) -> RescaledTrajectory:
    """Pull checkpoints at t = t'/tau and divide the velocity by tau."""
    p = traj.params
    t_prime = np.asarray(t_prime, dtype=float)
    if not traj.checkpoints:
        raise HorizonTooShort("trajectory holds no checkpoints")
    ck_t = np.array([t for t, _ in traj.checkpoints])
    need = t_prime / tau
    if need.max() > ck_t.max() + 0.5 * p.dt:
        raise HorizonTooShort(f"need original time {need.max():.6g}, trajectory reaches {ck_t.max():.6g}")
    grid = grid or traj.checkpoints[0][1].grid
    rho, vel = [], []
    for t in need:
        i = int(np.argmin(np.abs(ck_t - t)))
        if abs(ck_t[i] - t) >= p.dt:
            raise HorizonTooShort(f"no checkpoint within dt of t={t:.6g}")
        st = extract_hydro(traj.checkpoints[i][1], p.law, 0.0)
        rho.append(st.rho)
        vel.append((st.v[0] / tau, st.v[1] / tau))
    return RescaledTrajectory(tau, grid, p.law, t_prime, rho, vel)


# ------------------------------------------------- relative-entropy identity
def _ddt(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.gradient(y, t, edge_order=2)


def _contract(v, m) -> np.ndarray:
    v1, v2 = v
    return v1 * v1 * m[0] + 2 * v1 * v2 * m[1] + v2 * v2 * m[2]


def _snapshot_terms(grid: TorusGrid, law: PressureLaw, tau: float, rho, v, rho_bar) -> dict:
    g = grid
    a = log_sqrt_hessian(g, rho)
    b = log_sqrt_hessian(g, rho_bar)
    diff = [x - y for x, y in zip(a, b)]
    lr1, lr2 = g.gradient(np.log(rho))
    lb1, lb2 = g.gradient(np.log(rho_bar))
    d1, d2 = 0.5 * (lr1 - lb1), 0.5 * (lr2 - lb2)
    pr, pb = law.pprime(rho), law.pprime(rho_bar)
    gap = rho - rho_bar
    dV1, dV2 = g.gradient(g.solve_poisson(gap - np.mean(gap)))
    drho = -g.divergence(rho * v[0], rho * v[1])
    drho_bar = time_derivative(g, rho_bar, law)
    sigma = drho / (2 * rho)
    hess_log = tuple(2 * x for x in a)
    hess_log_bar = tuple(2 * x for x in b)
    return {
        "hessian": -g.integrate(rho * (diff[0] ** 2 + 2 * diff[1] ** 2 + diff[2] ** 2)),
        "curvature": 2.0 * g.integrate(rho * (b[0] * d1 * d1 + 2 * b[1] * d1 * d2 + b[2] * d2 * d2)),
        "pressure": -g.integrate(rho * ((pr * lr1 - pb * lb1) * (lr1 - lb1) + (pr * lr2 - pb * lb2) * (lr2 - lb2))),
        "poisson": -g.integrate(gap**2) + g.integrate(gap * (lb1 * dV1 + lb2 * dV2)),
        "log_flux_self": g.integrate(np.log(rho) * drho),
        "log_flux_cross": g.integrate(np.log(rho_bar) * drho),
        "rate_self": 4.0 * g.integrate(rho * sigma**2) + g.integrate(rho * _contract(v, hess_log)),
        "rate_cross": g.integrate(drho_bar / rho_bar * drho) + g.integrate(rho * _contract(v, hess_log_bar)),
        "relent": relative_entropy(rho, rho_bar, law.M0),
        "error": g.norm(gap),
    }


@dataclass
class BalanceSeries:
    """Groups of the relative-entropy identity sampled on the t' grid."""

    times: np.ndarray
    relent: np.ndarray
    lhs: np.ndarray
    groups: dict
    residual_series: np.ndarray
    residual: float
    remainder_self_integrated: np.ndarray
    remainder_cross_integrated: np.ndarray


def _balance_from_terms(times: np.ndarray, tau: float, terms: dict) -> BalanceSeries:
    t = times
    tau2 = tau * tau
    X = terms["log_flux_self"]
    Y = terms["log_flux_cross"]
    groups = {k: terms[k] for k in ("hessian", "curvature", "pressure", "poisson")}
    groups["remainder_self"] = tau2 * (-_ddt(X, t) + terms["rate_self"])
    groups["remainder_cross"] = -tau2 * (-_ddt(Y, t) + terms["rate_cross"])
    lhs = _ddt(terms["relent"], t)
    rhs = sum(groups[k] for k in GROUPS)
    res = lhs - rhs
    scale = 1.0 + float(np.max(sum(np.abs(groups[k]) for k in GROUPS)))
    interior = res[1:-1] if len(res) > 2 else res
    # time integrals of the two remainder groups (signs as in the identity),
    # derivative parts integrated exactly
    r_self = tau2 * (-(X - X[0]) + cumulative_trapezoid(terms["rate_self"], t, initial=0.0))
    r_cross = -tau2 * (-(Y - Y[0]) + cumulative_trapezoid(terms["rate_cross"], t, initial=0.0))
    return BalanceSeries(
        times=t,
        relent=terms["relent"],
        lhs=lhs,
        groups=groups,
        residual_series=res,
        residual=float(np.max(np.abs(interior))) / scale,
        remainder_self_integrated=r_self,
        remainder_cross_integrated=r_cross,
    )


def _align(rescaled: RescaledTrajectory, qdd: QDDTrajectory) -> list[np.ndarray]:
    lookup = {round(t, 12): r for t, r in qdd.samples}
    out = []
    for t in rescaled.times:
        key = round(float(t), 12)
        if key not in lookup:
            raise HorizonTooShort(f"QDD run has no sample at t'={t:.6g}")
        out.append(lookup[key])
    return out


def _collect_terms(rescaled: RescaledTrajectory, bars: list[np.ndarray]) -> dict:
    rows = [
        _snapshot_terms(rescaled.grid, rescaled.law, rescaled.tau, r, v, b)
        for r, v, b in zip(rescaled.rho, rescaled.v, bars)
    ]
    return {k: np.array([row[k] for row in rows]) for k in rows[0]}


def relative_entropy_balance(rescaled: RescaledTrajectory, qdd: QDDTrajectory) -> BalanceSeries:
    return _balance_from_terms(rescaled.times, rescaled.tau, _collect_terms(rescaled, _align(rescaled, qdd)))


def relative_entropy_balance_residual(rescaled: RescaledTrajectory, qdd: QDDTrajectory) -> float:
    """Max normalised residual of the relative-entropy identity over interior samples."""
    return relative_entropy_balance(rescaled, qdd).residual


# ------------------------------------------------------------------ rate fit
def fit_rate(taus: Sequence[float], errors: Sequence[float]):
    """Least squares of log(error) on log(tau): returns (slope, intercept, r_squared).

    The fit result also carries the slope's standard error as ``.stderr``.
    """
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    bad = [float(t) for t, e in zip(taus, errors) if not e > 0]
    if bad:
        raise DegenerateData(f"non-positive errors at tau = {bad}")
    if len(taus) < 3:
        raise DegenerateData("need at least 3 data points")
    if np.unique(taus).size < 2:
        raise DegenerateData("all taus are equal")
    fit = stats.linregress(np.log(taus), np.log(errors))
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), float(fit.stderr))


class RateFit(tuple):
    def __new__(cls, slope, intercept, r_squared, stderr):
        obj = super().__new__(cls, (slope, intercept, r_squared))
        obj.stderr = stderr
        return obj

    @property
    def slope(self) -> float:
        return self[0]

    @property
    def intercept(self) -> float:
        return self[1]

    @property
    def r_squared(self) -> float:
        return self[2]

    def band(self, z: float = 1.96) -> tuple[float, float]:
        return (self.slope - z * self.stderr, self.slope + z * self.stderr)


# --------------------------------------------------------------------- sweep
@dataclass
class MemberResult:
    """Curves and diagnostics for one tau of a sweep."""

    tau: float
    status: str
    note: str = ""
    times: Optional[np.ndarray] = None
    error: Optional[np.ndarray] = None
    relent: Optional[np.ndarray] = None
    hessian_rate: Optional[np.ndarray] = None
    hessian_cumulative: Optional[np.ndarray] = None
    sandwich_lower: Optional[np.ndarray] = None
    sandwich_upper: Optional[np.ndarray] = None
    max_density: float = math.nan
    momentum_gap: Optional[np.ndarray] = None
    balance: Optional[BalanceSeries] = None
    energy_excess: float = math.nan
    gcp_bound_sup: float = math.nan
    mass_drift: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "completed"

    @property
    def sup_error(self) -> float:
        return float(np.max(self.error))

    @property
    def remainder_self_sup(self) -> float:
        return float(np.max(np.abs(self.balance.remainder_self_integrated)))

    @property
    def remainder_cross_sup(self) -> float:
        return float(np.max(np.abs(self.balance.remainder_cross_integrated)))

    @property
    def remainder_total_sup(self) -> float:
        b = self.balance
        return float(np.max(np.abs(b.remainder_self_integrated + b.remainder_cross_integrated)))


@dataclass
class RelaxationReport:
    taus: list[float]
    t_prime: np.ndarray
    members: list[MemberResult]
    qdd_status: str
    notes: list[str] = field(default_factory=list)
    delta: float = 0.0

    @property
    def valid(self) -> list[MemberResult]:
        return [m for m in self.members if m.ok]

    @property
    def sup_errors(self) -> list[float]:
        return [m.sup_error for m in self.valid]

    def rate(self) -> RateFit:
        return fit_rate([m.tau for m in self.valid], self.sup_errors)

    def remainder_rates(self) -> tuple[RateFit, RateFit]:
        """Exponents of sup |time-integrated remainder| against tau, per group."""
        v = self.valid
        taus = [m.tau for m in v]
        return (
            fit_rate(taus, [m.remainder_self_sup for m in v]),
            fit_rate(taus, [m.remainder_cross_sup for m in v]),
        )

    def remainder_total_rate(self) -> RateFit:
        v = self.valid
        return fit_rate([m.tau for m in v], [m.remainder_total_sup for m in v])

    def errors_decreasing(self) -> bool:
        e = self.sup_errors
        return all(b < a for a, b in zip(e, e[1:]))

    def sandwich_holds(self) -> bool:
        """2 delta H <= ||rho_tau - rho_bar||^2 <= 2 C H at every sample of every member.

        C is the largest density seen in the sweep (both solvers).
        """
        c_upper = max(m.max_density for m in self.valid)
        for m in self.valid:
            sq = m.error**2
            h = m.relent
            slack = SANDWICH_SLACK * (sq + h) + 1e-300
            if np.any(2 * self.delta * h > sq + slack) or np.any(sq > 2 * c_upper * h + slack):
                return False
        return True

    def hypothesis_flags(self) -> list[str]:
        flags = []
        for m in self.valid:
            if m.energy_excess > ENERGY_HYPOTHESIS_TOL:
                flags.append(f"tau={m.tau:g}: energy bound exceeded by {m.energy_excess:.3e}")
            if not math.isfinite(m.gcp_bound_sup):
                flags.append(f"tau={m.tau:g}: GCP bound not finite")
        sups = [m.gcp_bound_sup for m in self.valid if math.isfinite(m.gcp_bound_sup)]
        if sups and min(sups) > 0 and max(sups) / min(sups) > 10.0:
            flags.append(f"GCP bound varies by factor {max(sups) / min(sups):.3g} across taus")
        return flags

    # ------------------------------------------------------------ output
    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for m in self.valid:
            tag = f"rlx_tau{m.tau:g}"
            curves = {
                "error": {"error": m.error},
                "relent": {"relative_entropy": m.relent, "sandwich_lower": m.sandwich_lower, "sandwich_upper": m.sandwich_upper},
                "hessdiss": {"rate": m.hessian_rate, "cumulative": m.hessian_cumulative},
                "momentum": {"momentum_gap": m.momentum_gap},
                "balance": {
                    "lhs": m.balance.lhs,
                    **{k: m.balance.groups[k] for k in GROUPS},
                    "residual": m.balance.residual_series,
                    "remainder_self_integrated": m.balance.remainder_self_integrated,
                    "remainder_cross_integrated": m.balance.remainder_cross_integrated,
                },
            }
            for name, cols in curves.items():
                path = out / f"{tag}_{name}.csv"
                _write_columns(path, m.times, cols)
                written.append(path)
        summary = out / "rlx_summary.txt"
        summary.write_text(self.summary())
        written.append(summary)
        return written

    def summary(self) -> str:
        lines = ["tau,status,sup_error,remainder_self_sup,remainder_cross_sup,balance_residual,energy_excess,gcp_bound_sup,mass_drift"]
        for m in self.members:
            if m.ok:
                lines.append(
                    f"{m.tau:.17g},{m.status},{m.sup_error:.17g},{m.remainder_self_sup:.17g},"
                    f"{m.remainder_cross_sup:.17g},{m.balance.residual:.17g},{m.energy_excess:.17g},"
                    f"{m.gcp_bound_sup:.17g},{m.mass_drift:.17g}"
                )
            else:
                lines.append(f"{m.tau:.17g},{m.status},,,,,,,")
        lines.append("")
        try:
            r = self.rate()
            lo, hi = r.band()
            lines.append(f"slope,{r.slope:.17g}")
            lines.append(f"intercept,{r.intercept:.17g}")
            lines.append(f"r_squared,{r.r_squared:.17g}")
            lines.append(f"slope_band_95,{lo:.17g},{hi:.17g}")
            rs, rc = self.remainder_rates()
            lines.append(f"remainder_self_exponent,{rs.slope:.17g}")
            lines.append(f"remainder_cross_exponent,{rc.slope:.17g}")
            lines.append(f"remainder_total_exponent,{self.remainder_total_rate().slope:.17g}")
        except DegenerateData as exc:
            lines.append("slope,nan")
            lines.append(f"fit_note,{exc}")
        lines.append(f"errors_decreasing,{self.errors_decreasing()}")
        lines.append(f"sandwich_holds,{self.sandwich_holds() if self.valid else True}")
        lines.append(f"qdd_status,{self.qdd_status}")
        for note in self.notes + self.hypothesis_flags():
            lines.append(f"note,{note}")
        return "\n".join(lines) + "\n"


def _write_columns(path: Path, t: np.ndarray, cols: dict) -> None:
    names = ["t_prime"] + list(cols)
    data = np.column_stack([t] + [np.asarray(c) for c in cols.values()])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def _run_member(args) -> MemberResult:
    tau, psi0, template, t_prime, bars, qdd_law = args
    grid = psi0.grid
    params = replace(template, tau=tau, t_end=float(t_prime[-1]) / tau)
    steps = [int(round(tp / tau / params.dt)) for tp in t_prime]
    traj = run_sl(psi0, params, steps)
    if traj.status != "completed":
        return MemberResult(tau, traj.status, note=f"tau={tau:g}: {traj.status} at t={traj.breach_time}, excluded from fit")
    rs = rescale(traj, tau, t_prime, grid)
    terms = _collect_terms(rs, bars)
    bal = _balance_from_terms(rs.times, tau, terms)

    hess_rate = -bal.groups["hessian"]
    mom = []
    for tp, r, v, b in zip(t_prime, rs.rho, rs.v, bars):
        if tp < LAYER_END:
            mom.append(math.nan)
            continue
        j1, j2 = consistent_momentum(grid, b, qdd_law)
        mom.append(math.sqrt(grid.norm(r * v[0] - j1) ** 2 + grid.norm(r * v[1] - j2) ** 2))
    mass = traj.column("mass")
    E = traj.column("energy")
    energy_excess = float(np.max(E + traj.column("cum_diss_v") / tau - E[0]) / (1.0 + abs(E[0])))
    gcp_bound = traj.column("gcp") + (traj.column("cum_diss_sigma") + traj.column("cum_diss_v4")) / tau
    err = terms["error"]
    h = terms["relent"]
    max_density = max(max(float(np.max(r)) for r in rs.rho), max(float(np.max(b)) for b in bars))
    return MemberResult(
        tau=tau,
        status="completed",
        times=np.asarray(t_prime),
        error=err,
        relent=h,
        hessian_rate=hess_rate,
        hessian_cumulative=cumulative_trapezoid(hess_rate, t_prime, initial=0.0),
        sandwich_lower=2 * template.delta * h,
        sandwich_upper=2 * max_density * h,
        max_density=max_density,
        momentum_gap=np.array(mom),
        balance=bal,
        energy_excess=energy_excess,
        gcp_bound_sup=float(np.max(gcp_bound)),
        mass_drift=float(np.max(np.abs(mass - mass[0])) / mass[0]),
    )


def sweep(
    rho0: np.ndarray,
    taus: Sequence[float],
    t_prime: Sequence[float],
    sl_params_template: SLParams,
    qdd_params: QDDParams,
    grid: TorusGrid,
    workers: Optional[int] = None,
) -> RelaxationReport:
    """Run SL for every tau and one QDD run from the same density with v0 = 0."""
    taus = [float(t) for t in taus]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly decreasing")
    t_prime = np.asarray(t_prime, dtype=float)
    if t_prime[0] != 0.0 or np.any(np.diff(t_prime) <= 0):
        raise ValueError("t' grid must start at 0 and increase strictly")
    psi0 = WaveFunction(np.sqrt(np.asarray(rho0, dtype=float)).astype(complex), grid, 0.0)
    # both solvers start from |psi0|^2 so the two densities agree bitwise at t' = 0
    rho0 = psi0.psi.real**2 + psi0.psi.imag**2
    qp = replace(qdd_params, t_end=float(t_prime[-1]))
    qdd = run_qdd(grid, rho0, qp, sample_times=t_prime)
    report = RelaxationReport(taus, t_prime, [], qdd.status, delta=sl_params_template.delta)
    if qdd.status != "completed":
        report.notes.append(f"QDD run ended with {qdd.status} at t'={qdd.breach_time}")
        return report
    bars = [r for _, r in qdd.samples]
    jobs = [(tau, psi0, sl_params_template, t_prime, bars, qp.law) for tau in taus]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(_run_member, jobs))
    else:
        members = [_run_member(j) for j in jobs]
    report.members = members
    report.notes.extend(m.note for m in members if m.note)
    return report
