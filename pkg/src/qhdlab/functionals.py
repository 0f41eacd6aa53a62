"""Scalar functionals, decay constants and inequality probes."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import QHDError
from .madelung import HydroState, PressureLaw, WaveFunction, check_floor
from .spectral import TorusGrid

LOGH2_SLACK = 1e-10


class NonZeroMean(QHDError):
    pass


@dataclass(frozen=True)
class FunctionalRecord:
    t: float
    mass: float
    energy: float
    quantum: float
    kinetic: float
    internal: float
    electric: float
    gcp: float
    entropy: float
    combined: float
    min_rho: float
    cum_diss_v: float = 0.0
    cum_diss_sigma: float = 0.0
    cum_diss_v4: float = 0.0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list[float]:
        return [getattr(self, name) for name in self.columns()]


# -------------------------------------------------------------------- entropy
def _x_log_x_excess(x: np.ndarray) -> np.ndarray:
    """x log x - x + 1, accurate near x = 1."""
    x = np.asarray(x, dtype=float)
    u = x - 1.0
    small = np.abs(u) < 1e-3
    us = np.where(small, u, 0.0)
    # sum_{k>=2} (-1)^k u^k / (k (k-1))
    series = np.zeros_like(us)
    power = us * us
    for k in range(2, 10):
        series += (-1) ** k * power / (k * (k - 1))
        power = power * us
    xd = np.where(small, 1.0, x)
    direct = xd * np.log(xd) - xd + 1.0
    return np.where(small, series, direct)


def entropy(rho: np.ndarray, M0: float) -> float:
    """H(rho) = int rho log(rho/M0) for densities of mass M0.

    Evaluated as M0 int h(rho/M0) with h(x) = x log x - x + 1 >= 0, which
    equals the plain integral when int rho = M0 and never goes negative
    through roundoff in the mass.
    """
    return float(M0 * np.mean(_x_log_x_excess(rho / M0)))


def relative_entropy(rho_tau: np.ndarray, rho_bar: np.ndarray, M0: float, delta: float = 0.0) -> float:
    """int g(rho_tau) - g(rho_bar) - g'(rho_bar)(rho_tau - rho_bar), g(s) = s log(s/M0)."""
    check_floor(rho_tau, delta)
    check_floor(rho_bar, delta)
    return float(np.mean(rho_bar * _x_log_x_excess(rho_tau / rho_bar)))


# --------------------------------------------------------------- energy & GCP
def energy_parts(state: HydroState, law: PressureLaw) -> tuple[float, float, float, float]:
    """(quantum, kinetic, internal, electric) energy densities integrated."""
    grid = state.grid
    g1, g2 = grid.gradient(np.sqrt(state.rho))
    v1, v2 = state.v
    e1, e2 = grid.gradient(state.V)
    quantum = 0.5 * grid.integrate(g1**2 + g2**2)
    kinetic = 0.5 * grid.integrate(state.rho * (v1**2 + v2**2))
    internal = grid.integrate(law.f(state.rho))
    electric = 0.5 * grid.integrate(e1**2 + e2**2)
    return quantum, kinetic, internal, electric


def gcp(state: HydroState) -> float:
    """I = 1/2 int rho (mu^2 + sigma^2)."""
    return 0.5 * state.grid.integrate(state.rho * (state.mu**2 + state.sigma**2))


def record(
    state: HydroState,
    w: Optional[WaveFunction],
    law: PressureLaw,
    c1: float = 1.0,
    t: float = 0.0,
    running: tuple[float, float, float] = (0.0, 0.0, 0.0),
    delta: float = 0.0,
) -> FunctionalRecord:
    """Evaluate every monitored functional of one snapshot.

    ``state`` must carry mu and sigma (as produced by ``extract_hydro``).
    ``w`` is accepted for symmetry with the solver and is not needed here.
    """
    check_floor(state.rho, delta, t)
    if state.mu is None or state.sigma is None:
        raise ValueError("record needs a state with mu and sigma")
    q, k, i, e = energy_parts(state, law)
    E = q + k + i + e
    I = gcp(state)
    H = entropy(state.rho, law.M0)
    return FunctionalRecord(
        t=float(t),
        mass=state.grid.integrate(state.rho),
        energy=E,
        quantum=q,
        kinetic=k,
        internal=i,
        electric=e,
        gcp=I,
        entropy=H,
        combined=H + E + c1 * I,
        min_rho=float(np.min(state.rho)),
        cum_diss_v=float(running[0]),
        cum_diss_sigma=float(running[1]),
        cum_diss_v4=float(running[2]),
    )


# ------------------------------------------------------------ decay constants
def g1(u: float, w: float, C0: float = 1.0) -> float:
    return C0 * u * (1.0 + abs(math.log(w / u)))


def g2(u: float, w: float, M0: float, C0: float = 1.0) -> float:
    a = g1(u, w, C0)
    return C0 * a * u * (1.0 + abs(math.log(math.sqrt(M0) + a)) + abs(math.log(w / u)))


def g3(M0: float, E0: float, delta: float, n: int) -> float:
    return math.sqrt(M0) + M0 * (M0 - delta) ** (4 * n - 2) + M0 ** (2.0 / 3.0) * E0 ** (1.0 / 3.0)


def c1(M0: float, E0: float, delta: float, n: int, C0: float = 1.0) -> float:
    fp = abs((delta - M0) ** (2 * n - 1))
    second = E0 * (M0 + fp) / delta
    return 1.0 / (4.0 * C0 * n * M0 * E0) * min(1.0 / g3(M0, E0, delta, n), 1.0 / second)


@dataclass(frozen=True)
class DecayConstants:
    c1: float
    C0_cal: float
    tau_star: float
    g3: float

    @classmethod
    def from_data(cls, M0: float, E0: float, delta: float, n: int, C0_cal: float = 1.0) -> "DecayConstants":
        if not (M0 > delta > 0 and E0 > 0 and n >= 1):
            raise ValueError("decay constants need M0 > delta > 0, E0 > 0, n >= 1")
        c = c1(M0, E0, delta, n, C0_cal)
        ts = min(math.sqrt(c) / 4.0, math.sqrt(2.0 * c * delta / (8.0 + delta)), 0.25)
        return cls(c1=c, C0_cal=C0_cal, tau_star=ts, g3=g3(M0, E0, delta, n))


@dataclass(frozen=True)
class AdmissibilityCheck:
    ok: bool
    lhs: float
    rhs: float
    dep_lhs: Optional[float] = None
    dep_rhs: Optional[float] = None

    def __bool__(self) -> bool:
        return self.ok


def check_admissible(
    E0: float,
    I0: float,
    M0: float,
    delta: float,
    epsilon: float = 0.1,
    *,
    H0: Optional[float] = None,
    n: int = 1,
    C0_cal: float = 1.0,
) -> AdmissibilityCheck:
    """Smallness test exp(E0)(1 + I0) <= eps exp(M0 - delta)/(M0 - delta).

    When ``H0`` is given and E0 > 0 the log-form companion condition
    C0 E0 [1 + |log c1^(-1/2)| + |log F0|] <= M0 - delta is evaluated too.
    """
    if not M0 > delta:
        raise ValueError("admissibility needs M0 > delta")
    gap = M0 - delta
    lhs = math.exp(E0) * (1.0 + I0) if math.isfinite(I0) else math.inf
    rhs = epsilon * math.exp(gap) / gap
    dep_lhs = dep_rhs = None
    if H0 is not None and E0 > 0:
        c = c1(M0, E0, delta, n, C0_cal)
        F0 = H0 + E0 + c * I0
        dep_lhs = C0_cal * E0 * (1.0 + abs(math.log(c ** -0.5)) + abs(math.log(F0)))
        dep_rhs = gap
    return AdmissibilityCheck(lhs <= rhs, lhs, rhs, dep_lhs, dep_rhs)


# ------------------------------------------------------------ inequality probes
def log_sqrt_hessian(grid: TorusGrid, rho: np.ndarray):
    """Components (a11, a12, a22) of the Hessian of log sqrt(rho)."""
    s = np.sqrt(rho)
    g1, g2 = grid.gradient(s)
    q1 = grid.dealias(g1 / s)
    q2 = grid.dealias(g2 / s)
    a11, a12 = grid.gradient(q1)
    a21, a22 = grid.gradient(q2)
    return a11, 0.5 * (a12 + a21), a22


def frob2(h) -> np.ndarray:
    a11, a12, a22 = h
    return a11**2 + 2 * a12**2 + a22**2


def logH2_sides(grid: TorusGrid, rho: np.ndarray) -> tuple[float, float]:
    s = np.sqrt(rho)
    h11, h12, h22 = grid.hessian(s)
    g1, g2 = grid.gradient(s)
    lhs = (
        grid.integrate((h11 + h22) ** 2) / 3.0
        + 2.0 * grid.integrate(h11**2 + 2 * h12**2 + h22**2) / 3.0
        + grid.integrate((g1**2 + g2**2) ** 2 / rho) / 3.0
    )
    rhs = grid.integrate(rho * frob2(log_sqrt_hessian(grid, rho)))
    return lhs, rhs


def logH2_terms(grid: TorusGrid, rho: np.ndarray) -> dict:
    """Integrals behind the log-Hessian bound.

    hess_sqrt = int |Hess sqrt rho|^2, lap_sqrt = int (Lap sqrt rho)^2,
    grad4 = int |grad sqrt rho|^4 / rho, hess_log = int rho |Hess log sqrt rho|^2
    and lap_log = int rho (Lap log sqrt rho)^2.  Integration by parts gives
    2 hess_log + lap_log = 2 hess_sqrt + lap_sqrt + grad4 in any dimension.
    """
    s = np.sqrt(rho)
    h11, h12, h22 = grid.hessian(s)
    g1, g2 = grid.gradient(s)
    a = log_sqrt_hessian(grid, rho)
    return {
        "hess_sqrt": grid.integrate(h11**2 + 2 * h12**2 + h22**2),
        "lap_sqrt": grid.integrate((h11 + h22) ** 2),
        "grad4": grid.integrate((g1**2 + g2**2) ** 2 / rho),
        "hess_log": grid.integrate(rho * frob2(a)),
        "lap_log": grid.integrate(rho * (a[0] + a[2]) ** 2),
    }


def check_logH2(grid: TorusGrid, rho: np.ndarray, delta: float = 0.0) -> tuple[float, float, bool]:
    check_floor(rho, delta)
    lhs, rhs = logH2_sides(grid, rho)
    return lhs, rhs, bool(lhs <= rhs + LOGH2_SLACK * (1.0 + rhs))


def check_log_embedding(grid: TorusGrid, u: np.ndarray) -> float:
    """||u||_inf / (||grad u|| (1 + |log(||Lap u|| / ||grad u||)|)) for zero-mean u."""
    m = float(np.mean(u))
    if abs(m) > 1e-10 * max(1.0, float(np.max(np.abs(u)))):
        raise NonZeroMean(f"log embedding needs a zero-mean field, mean = {m:.3e}")
    g1, g2 = grid.gradient(u)
    ng = math.sqrt(grid.integrate(g1**2 + g2**2))
    if ng == 0.0:
        raise ValueError("field is identically zero")
    nl = grid.norm(grid.laplacian(u))
    return float(np.max(np.abs(u))) / (ng * (1.0 + abs(math.log(nl / ng))))


def check_log_sobolev(grid: TorusGrid, u: np.ndarray) -> float:
    """int u^2 log(u^2 / mean u^2) divided by int |grad u|^2 (0 when both vanish)."""
    u2 = u * u
    m2 = float(np.mean(u2))
    if m2 == 0.0:
        raise ValueError("field is identically zero")
    ratio = u2 / m2
    lhs = m2 * grid.integrate(_x_log_x_excess(ratio))
    g1, g2 = grid.gradient(u)
    rhs = grid.integrate(g1**2 + g2**2)
    if rhs <= 1e-300:
        return 0.0
    return lhs / rhs
