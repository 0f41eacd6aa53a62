"""IMEX pseudospectral solver for the quantum drift-diffusion equation.

    d_t rho = -div J,
    J = Lap-grad(rho)/4 - div(grad sqrt(rho) x grad sqrt(rho)) - grad p(rho) - rho grad V,
    -Lap V = rho - M0.

The fourth-order part -Lap^2 rho / 4 is implicit; the rest is explicit and
truncated to the 2/3 band.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import VacuumBreach
from .functionals import entropy
from .madelung import PressureLaw, check_floor
from .spectral import TorusGrid


@dataclass(frozen=True)
class QDDParams:
    law: PressureLaw = field(default_factory=PressureLaw)
    delta: float = 0.25
    dt: float = 1e-6
    t_end: float = 1e-2
    dealias: bool = True
    record_every: int = 1
    # optional ((t_start, dt), ...): use dt from t_start onward
    dt_schedule: tuple = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if any(not h > 0 for _, h in self.dt_schedule):
            raise ValueError("scheduled dt must be > 0")

    def dt_at(self, t: float) -> float:
        h = self.dt
        for start, dt in sorted(self.dt_schedule):
            if t >= start - 1e-12:
                h = dt
        return h


@dataclass
class QDDTrajectory:
    params: QDDParams
    times: list[float] = field(default_factory=list)
    entropy: list[float] = field(default_factory=list)
    hessian_sqrt: list[float] = field(default_factory=list)
    quarter_grad4: list[float] = field(default_factory=list)
    samples: list[tuple[float, np.ndarray]] = field(default_factory=list)
    status: str = "completed"
    breach_time: Optional[float] = None
    final: Optional[np.ndarray] = None

    def entropy_monotone(self, slack: float = 1e-8) -> bool:
        h = np.asarray(self.entropy)
        return bool(np.all(np.diff(h) <= slack))


def _stress_divdiv(grid: TorusGrid, rho: np.ndarray) -> np.ndarray:
    """Spectral coefficients of div div(grad sqrt(rho) x grad sqrt(rho))."""
    c = grid._cache
    s1, s2 = grid.gradient(np.sqrt(rho))
    d1, d2 = c["d1r"], c["d2r"]
    return -(
        d1 * d1 * grid.forward(s1 * s1)
        + 2 * d1 * d2 * grid.forward(s1 * s2)
        + d2 * d2 * grid.forward(s2 * s2)
    )


def qdd_rhs_hat(
    grid: TorusGrid,
    rho: np.ndarray,
    law: PressureLaw,
    dealias: bool = True,
    rho_hat: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Explicit part N(rho) in spectral form (everything except -Lap^2 rho / 4)."""
    c = grid._cache
    ksq = c["ksqr"]
    d1, d2 = c["d1r"], c["d2r"]
    if rho_hat is None:
        rho_hat = grid.forward(rho)
    Vh = c["invksqr"] * rho_hat
    e1 = grid.inverse(1j * d1 * Vh, True)
    e2 = grid.inverse(1j * d2 * Vh, True)
    out = (
        _stress_divdiv(grid, rho)
        - ksq * grid.forward(law.p(rho))
        + 1j * (d1 * grid.forward(rho * e1) + d2 * grid.forward(rho * e2))
    )
    if dealias:
        out = out * c["keepr"]
    return out


def time_derivative(grid: TorusGrid, rho: np.ndarray, law: PressureLaw, dealias: bool = True) -> np.ndarray:
    """Full right-hand side d_t rho of the QDD equation at ``rho``."""
    c = grid._cache
    out = qdd_rhs_hat(grid, rho, law, dealias) - 0.25 * c["ksqr"] ** 2 * grid.forward(rho)
    return grid.inverse(out, True)


def qdd_step(grid: TorusGrid, rho: np.ndarray, params: QDDParams, dt: Optional[float] = None) -> np.ndarray:
    """One implicit-explicit Euler step."""
    h = params.dt if dt is None else dt
    check_floor(rho, params.delta)
    c = grid._cache
    rho_hat = grid.forward(rho)
    rh = rho_hat + h * qdd_rhs_hat(grid, rho, params.law, params.dealias, rho_hat)
    rh = rh / (1.0 + 0.25 * h * c["ksqr"] ** 2)
    return grid.inverse(rh, True)


def consistent_momentum(grid: TorusGrid, rho: np.ndarray, law: PressureLaw, delta: float = 0.0):
    """Momentum J associated with a density by the drift-diffusion constitutive law."""
    check_floor(rho, delta)
    c = grid._cache
    d1, d2 = c["d1r"], c["d2r"]
    s1, s2 = grid.gradient(np.sqrt(rho))
    t11, t12, t22 = grid.forward(s1 * s1), grid.forward(s1 * s2), grid.forward(s2 * s2)
    lap = grid.laplacian(rho)
    g1, g2 = grid.gradient(0.25 * lap - law.p(rho))
    V = grid.solve_poisson(rho - law.M0)
    e1, e2 = grid.gradient(V)
    div1 = grid.inverse(1j * (d1 * t11 + d2 * t12), True)
    div2 = grid.inverse(1j * (d1 * t12 + d2 * t22), True)
    return g1 - div1 - rho * e1, g2 - div2 - rho * e2


def dissipation_integrals(grid: TorusGrid, rho: np.ndarray) -> tuple[float, float]:
    """(int |Hess sqrt(rho)|^2, int |grad rho^(1/4)|^4)."""
    h11, h12, h22 = grid.hessian(np.sqrt(rho))
    q1, q2 = grid.gradient(rho**0.25)
    return (
        grid.integrate(h11**2 + 2 * h12**2 + h22**2),
        grid.integrate((q1**2 + q2**2) ** 2),
    )


def run_qdd(
    grid: TorusGrid,
    rho0: np.ndarray,
    params: QDDParams,
    sample_times: Optional[Iterable[float]] = None,
) -> QDDTrajectory:
    """Integrate from 0 to ``params.t_end``.

    With ``sample_times`` the step is shortened where needed so that every
    requested time is hit exactly, and the density is stored there.
    """
    traj = QDDTrajectory(params)
    law = params.law
    rho = np.array(rho0, dtype=float)
    check_floor(rho, params.delta, 0.0)
    requested = () if sample_times is None else [float(s) for s in sample_times]
    wanted = set(s for s in requested if 0.0 <= s <= params.t_end)
    # schedule switch points are stops too, so the step is re-chosen there
    switches = set(float(s) for s, _ in params.dt_schedule if 0.0 < s < params.t_end)
    stops = sorted((wanted | switches) - {params.t_end})
    stops.append(params.t_end)

    def note(t, r):
        a, b = dissipation_integrals(grid, r)
        traj.times.append(t)
        traj.entropy.append(entropy(r, law.M0))
        traj.hessian_sqrt.append(a)
        traj.quarter_grad4.append(b)

    note(0.0, rho)
    t = 0.0
    k = 0
    for stop in stops:
        if stop == 0.0:
            if 0.0 in wanted:
                traj.samples.append((0.0, rho.copy()))
            continue
        nsub = max(1, int(np.ceil((stop - t) / params.dt_at(t) - 1e-9)))
        h = (stop - t) / nsub
        for i in range(nsub):
            try:
                rho = qdd_step(grid, rho, params, h)
                check_floor(rho, params.delta)
            except VacuumBreach:
                traj.status = "vacuum_breach"
                traj.breach_time = t + (i + 1) * h
                traj.final = rho
                return traj
            k += 1
            t_now = stop if i == nsub - 1 else t + (i + 1) * h
            if k % params.record_every == 0 or i == nsub - 1:
                note(t_now, rho)
        t = stop
        if (stop in wanted or (sample_times is not None and stop == params.t_end)) and (
            not traj.samples or traj.samples[-1][0] != stop
        ):
            traj.samples.append((stop, rho.copy()))
    traj.final = rho
    return traj
