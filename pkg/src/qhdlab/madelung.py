"""Polar factorisation psi = sqrt(rho) exp(iS) and its inverse on the torus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonZeroCirculation, NotIrrotational, VacuumBreach
from .spectral import TorusGrid

CURL_TOL = 1e-8
CIRCULATION_TOL = 1e-8


@dataclass(frozen=True)
class PressureLaw:
    """Internal energy f(rho) = (rho - M0)^(2n) / (2n) and its companions."""

    n: int = 1
    M0: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("pressure exponent n must be a positive integer")
        if not self.M0 > 0:
            raise ValueError("M0 must be positive")

    def f(self, rho):
        return (rho - self.M0) ** (2 * self.n) / (2 * self.n)

    def fprime(self, rho):
        return (rho - self.M0) ** (2 * self.n - 1)

    def p(self, rho):
        return self.fprime(rho) * rho - self.f(rho)

    def pprime(self, rho):
        return (2 * self.n - 1) * rho * (rho - self.M0) ** (2 * self.n - 2)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    psi: np.ndarray
    grid: TorusGrid
    mean_phase: float = 0.0


@dataclass(frozen=True, eq=False)
class HydroState:
    """Density, velocity and potential, with optional cached mu and sigma."""

    grid: TorusGrid
    rho: np.ndarray
    v: tuple[np.ndarray, np.ndarray]
    V: np.ndarray
    mu: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    @property
    def momentum(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.rho * self.v[0], self.rho * self.v[1])

    @property
    def sqrt_momentum(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.sqrt(self.rho)
        return (s * self.v[0], s * self.v[1])


def check_floor(rho: np.ndarray, delta: float, t: float | None = None) -> None:
    m = float(np.min(rho))
    if m < delta:
        raise VacuumBreach(m, delta, t)


def velocity_of(grid: TorusGrid, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """v = Im(grad psi / psi)."""
    g1, g2 = grid.gradient(psi)
    rho = psi.real**2 + psi.imag**2
    conj = np.conj(psi)
    return ((conj * g1).imag / rho, (conj * g2).imag / rho)


def electric_potential(grid: TorusGrid, rho: np.ndarray, M0: float) -> np.ndarray:
    return grid.solve_poisson(rho - M0)


def extract_hydro(w: WaveFunction, law: PressureLaw, delta: float | None = None) -> HydroState:
    """Hydrodynamic variables of a wave function, with mu and sigma from Lap psi / psi."""
    grid = w.grid
    psi = w.psi
    rho = psi.real**2 + psi.imag**2
    check_floor(rho, 0.1 * law.M0 if delta is None else delta)
    psih = grid.forward(psi)
    d1 = grid._cache["d1f"]
    d2 = grid._cache["d2f"]
    g1 = grid.inverse(1j * d1 * psih, False)
    g2 = grid.inverse(1j * d2 * psih, False)
    lap = grid.inverse(-grid._cache["ksqf"] * psih, False)
    conj = np.conj(psi)
    v = ((conj * g1).imag / rho, (conj * g2).imag / rho)
    ratio = conj * lap / rho
    V = electric_potential(grid, rho, law.M0)
    mu = -0.5 * ratio.real + law.fprime(rho) + V
    sigma = -0.5 * ratio.imag
    return HydroState(grid, rho, v, V, mu, sigma)


def chemical_potential_hydro(state: HydroState, law: PressureLaw) -> np.ndarray:
    """mu = -Lap sqrt(rho) / (2 sqrt(rho)) + |v|^2/2 + f'(rho) + V."""
    s = np.sqrt(state.rho)
    v1, v2 = state.v
    return -0.5 * state.grid.laplacian(s) / s + 0.5 * (v1**2 + v2**2) + law.fprime(state.rho) + state.V


def sigma_hydro(state: HydroState) -> np.ndarray:
    """sigma = -div(rho v) / (2 rho)."""
    j1, j2 = state.momentum
    return -0.5 * state.grid.divergence(j1, j2) / state.rho


def hydro_state(grid: TorusGrid, rho: np.ndarray, v, law: PressureLaw) -> HydroState:
    """Assemble a state from (rho, v); V, mu and sigma are filled in."""
    v = (np.asarray(v[0], dtype=float), np.asarray(v[1], dtype=float))
    base = HydroState(grid, rho, v, electric_potential(grid, rho, law.M0))
    return HydroState(grid, rho, v, base.V, chemical_potential_hydro(base, law), sigma_hydro(base))


def check_phase_compatible(grid: TorusGrid, v) -> None:
    """Raise unless v is curl-free with vanishing line averages."""
    v1, v2 = v
    scale = 1.0 + max(float(np.max(np.abs(v1))), float(np.max(np.abs(v2))))
    c = grid.curl(v1, v2)
    if float(np.max(np.abs(c))) > CURL_TOL * scale:
        raise NotIrrotational(f"curl v reaches {np.max(np.abs(c)):.3e}")
    # v1 averaged along x1 and v2 along x2 must vanish on every line
    circ = max(float(np.max(np.abs(v1.mean(axis=0)))), float(np.max(np.abs(v2.mean(axis=1)))))
    if circ > CIRCULATION_TOL * scale:
        raise NonZeroCirculation(f"velocity has nonzero winding (line average {circ:.3e})")


def phase_of(grid: TorusGrid, v, S_star: float = 0.0) -> np.ndarray:
    """Phase S with grad S = v and mean S = S_star."""
    return grid.potential_of(v[0], v[1]) + S_star


def lift_wavefunction(state: HydroState, S_star: float = 0.0, delta: float = 0.0) -> WaveFunction:
    check_floor(state.rho, delta)
    check_phase_compatible(state.grid, state.v)
    S = phase_of(state.grid, state.v, S_star)
    return WaveFunction(np.sqrt(state.rho) * np.exp(1j * S), state.grid, float(S_star))


def mean_mu(state: HydroState, law: PressureLaw, delta: float = 0.0) -> float:
    """Integral of mu in the form |grad sqrt(rho)|^2/(2 rho) + |v|^2/2 + f'(rho) + V."""
    check_floor(state.rho, delta)
    grid = state.grid
    g1, g2 = grid.gradient(np.sqrt(state.rho))
    v1, v2 = state.v
    integrand = (g1**2 + g2**2) / (2 * state.rho) + 0.5 * (v1**2 + v2**2) + law.fprime(state.rho) + state.V
    return grid.integrate(integrand)


def evolve_mean_phase(mean_S: float, mean_mu: float, tau: float, dt: float) -> float:
    """Exact step of dS/dt = -mu - S/tau with mu frozen; tau = inf disables relaxation."""
    if np.isinf(tau):
        return mean_S - dt * mean_mu
    decay = np.exp(-dt / tau)
    return decay * mean_S + tau * np.expm1(-dt / tau) * mean_mu
