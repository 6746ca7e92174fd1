"""Temperature profiles for which no interior scatterer exchanges net energy.

Wandering tracers give a linear profile.  Confined tracers give a nonlinear
one: every link carries the same flux ``c`` with

    T_{n+1} - T_n = c (T_n^{-1/2} + T_{n+1}^{-1/2}),

solved here by shooting on ``c``.  As ``N`` grows the profile approaches
``h(x) = (T_L^{3/2} + x (T_R^{3/2} - T_L^{3/2}))^{2/3}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import optimize

from .analytic import SQRT_HALF_PI, confined_normalizations, confined_stationary, wandering_stationary
from .exceptions import DomainError, InvalidSizeError, SolverError
from .model import InverseTempProfile

SHOOT_RTOL = 1e-12


@dataclass(frozen=True)
class ProfileSolution:
    """Boundary-value solution; ``flux`` is the stationary current on every link."""

    temperatures: np.ndarray
    flux: float
    residual: float
    model: Literal["wandering", "confined"]

    @property
    def profile(self) -> InverseTempProfile:
        return InverseTempProfile.from_temperatures(self.temperatures)

    @property
    def n_links(self) -> int:
        return self.temperatures.size - 1


def _check(T_L, T_R, N):
    for name, T in (("T_L", T_L), ("T_R", T_R)):
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"{name} must be positive, got {T}")
    if int(N) != N or N < 1:
        raise InvalidSizeError(f"N must be a positive integer, got {N}")


def _interior_residual(report) -> float:
    E = report.energy_flows[1:-1]
    return float(np.max(np.abs(E))) if E.size else 0.0


def wandering_profile(T_L: float, T_R: float, N: int) -> ProfileSolution:
    """``T_n = T_L + (n / N)(T_R - T_L)``."""
    _check(T_L, T_R, N)
    T = T_L + np.arange(N + 1) / N * (T_R - T_L)
    T[0], T[-1] = T_L, T_R
    rep = wandering_stationary(InverseTempProfile.from_temperatures(T))
    return ProfileSolution(T, float(rep.currents[0]), _interior_residual(rep), "wandering")


def _advance(T: float, c: float) -> float:
    """Next temperature: ``y = sqrt(T_{n+1})`` is the positive root of ``y^3 - (T + c/sqrt(T)) y - c``."""
    if c == 0.0:
        return T
    b = T + c / math.sqrt(T)
    f = lambda y: (y * y - b) * y - c
    y0 = math.sqrt(T)
    # f(y0) = -c (1 + y0/sqrt(T)) < 0 and f grows like y^3
    hi = max(y0, math.sqrt(b)) + c ** (1.0 / 3.0) + 1.0
    while f(hi) < 0:
        hi *= 2.0
    y = optimize.brentq(f, y0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return y * y


def _shoot(T_L: float, c: float, N: int) -> np.ndarray:
    T = np.empty(N + 1)
    T[0] = T_L
    for n in range(N):
        T[n + 1] = _advance(T[n], c)
    return T


def confined_profile(T_L: float, T_R: float, N: int) -> ProfileSolution:
    """Self-consistent profile for confined tracers, by shooting on the link flux."""
    _check(T_L, T_R, N)
    if T_L == T_R:
        T = np.full(N + 1, float(T_L))
        return ProfileSolution(T, 0.0, 0.0, "confined")
    lo_T, hi_T = min(T_L, T_R), max(T_L, T_R)
    # c(T_{n+1}^{-1/2} + T_n^{-1/2}) >= 2c / sqrt(hi_T) per link, so the total rise bounds c
    c_hi = 1.01 * (hi_T - lo_T) * math.sqrt(hi_T) / (2 * N)
    miss = lambda c: _shoot(lo_T, c, N)[-1] - hi_T
    if miss(c_hi) < 0:
        raise SolverError("flux bracket does not contain the root", c_hi=c_hi, miss=miss(c_hi))
    c = optimize.brentq(miss, 0.0, c_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    T = _shoot(lo_T, c, N)
    gap = abs(T[-1] - hi_T)
    if gap > SHOOT_RTOL * hi_T:
        raise SolverError("shooting did not reach the right boundary", gap=gap, c=c)
    T[0], T[-1] = lo_T, hi_T
    if T_R < T_L:
        T = T[::-1].copy()
    rep = confined_stationary(InverseTempProfile.from_temperatures(T))
    flux = c / SQRT_HALF_PI * (1.0 if T_R < T_L else -1.0)
    return ProfileSolution(T, flux, _interior_residual(rep), "confined")


def link_fluxes(T: np.ndarray) -> np.ndarray:
    """``(T_{n+1} - T_n) / (T_n^{-1/2} + T_{n+1}^{-1/2})`` per link."""
    T = np.asarray(T, dtype=float)
    return (T[1:] - T[:-1]) / (T[:-1] ** -0.5 + T[1:] ** -0.5)


def continuum_profile(T_L: float, T_R: float) -> Callable[[np.ndarray], np.ndarray]:
    """``h(x) = (T_L^{3/2} + x (T_R^{3/2} - T_L^{3/2}))^{2/3}`` on ``[0, 1]``."""
    _check(T_L, T_R, 1)
    a, b = T_L ** 1.5, T_R ** 1.5

    def h(x):
        x = np.asarray(x, dtype=float)
        out = (a + x * (b - a)) ** (2.0 / 3.0)
        return float(out) if out.ndim == 0 else out

    return h


def local_conductivity(T_L: float, T_R: float, x) -> np.ndarray:
    """Continuum conductivity ``sqrt(h(x) / (2 pi))``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("x must lie in [0, 1]")
    out = np.sqrt(continuum_profile(T_L, T_R)(x) / (2.0 * math.pi))
    return float(out) if np.ndim(out) == 0 else out


def finite_conductivity(solution: ProfileSolution, x: float) -> float:
    """``1 / Z_n`` at ``n = floor(N x)`` (clamped to the last link)."""
    N = solution.n_links
    n = min(int(math.floor(N * x)), N - 1)
    return float(1.0 / confined_normalizations(solution.profile)[n])


def continuum_error(T_L: float, T_R: float, N: int) -> float:
    """``max_n |T_n - h(n/N)|`` for the confined solution."""
    sol = confined_profile(T_L, T_R, N)
    h = continuum_profile(T_L, T_R)
    return float(np.max(np.abs(sol.temperatures - h(np.arange(N + 1) / N))))


def convergence_table(T_L: float, T_R: float, sizes=(25, 50, 100, 200)) -> list[tuple[int, float, float]]:
    """Rows ``(N, error, log2 rate from previous N)``; the first rate is NaN."""
    rows = []
    prev = None
    for N in sizes:
        err = continuum_error(T_L, T_R, N)
        rate = math.nan if prev is None else math.log2(prev[1] / err) / math.log2(N / prev[0])
        rows.append((N, err, rate))
        prev = (N, err)
    return rows
