"""Closed-form stationary quantities of the tracer models.

Conventions: ``E_n`` is the energy the tracers *gain* from scatterer ``n``
per unit time, ``J_n`` the energy current from scatterer ``n`` to ``n + 1``
and ``S = -sum_n E_n / T_n`` the entropy flow.  All are per unit time in the
stationary state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erf

from .model import (
    BasicModel,
    ConfinedModel,
    GeneralModel,
    InverseTempProfile,
    TransitionMatrix,
    WanderingModel,
    chain_stationary_distribution,
    wandering_transition_matrix,
)

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


@dataclass(frozen=True)
class StationaryReport:
    model: str
    temperatures: np.ndarray
    currents: np.ndarray
    energy_flows: np.ndarray
    entropy_rate: float
    frequencies: np.ndarray
    conductivities: np.ndarray
    Z_N: Optional[float] = None
    Z_n: Optional[np.ndarray] = None
    n_tracers: int = 1


def wandering_normalization(profile: InverseTempProfile) -> float:
    """``sqrt(pi/2) * sum_{n=1}^N (sqrt(beta_{n-1}) + sqrt(beta_n))``."""
    r = np.sqrt(profile.betas)
    return SQRT_HALF_PI * math.fsum(np.concatenate([r[:-1], r[1:]]))


def confined_normalizations(profile: InverseTempProfile) -> np.ndarray:
    """Per-cell mean round-trip time ``sqrt(pi beta_n/2) + sqrt(pi beta_{n+1}/2)``."""
    r = np.sqrt(np.pi * profile.betas / 2.0)
    return r[:-1] + r[1:]


def _entropy_from_flows(T, E):
    return -math.fsum(E / T)


def wandering_stationary(profile: InverseTempProfile, n_tracers: int = 1) -> StationaryReport:
    T = profile.temperatures
    N = profile.n_links
    Z = wandering_normalization(profile)
    M = n_tracers
    J = M * (T[:-1] - T[1:]) / Z
    E = np.empty(N + 1)
    E[0] = M * (T[0] - T[1]) / Z
    E[N] = M * (T[N] - T[N - 1]) / Z
    E[1:N] = M * (2 * T[1:N] - T[:N - 1] - T[2:]) / Z
    S = M / Z * math.fsum((T[:-1] - T[1:]) ** 2 / (T[:-1] * T[1:]))
    freq = np.full(N + 1, 2.0 * M / Z)
    freq[0] = freq[N] = M / Z
    kappa = np.full(N, M / Z)
    return StationaryReport("wandering", T, J, E, S, freq, kappa, Z_N=Z, n_tracers=M)


def confined_stationary(profile: InverseTempProfile) -> StationaryReport:
    T = profile.temperatures
    N = profile.n_links
    Zn = confined_normalizations(profile)
    J = (T[:-1] - T[1:]) / Zn
    E = np.zeros(N + 1)
    E[:-1] += (T[:-1] - T[1:]) / Zn
    E[1:] += (T[1:] - T[:-1]) / Zn
    S = math.fsum((T[:-1] - T[1:]) ** 2 / (Zn * T[:-1] * T[1:]))
    freq = np.zeros(N + 1)
    freq[:-1] += 1.0 / Zn
    freq[1:] += 1.0 / Zn
    return StationaryReport("confined", T, J, E, S, freq, 1.0 / Zn, Z_n=Zn, n_tracers=N)


def entropy_rate_from_flows(report: StationaryReport) -> float:
    return _entropy_from_flows(report.temperatures, report.energy_flows)


def wandering_large_n_limit(T_L: float, T_R: float) -> float:
    """Limit of ``Z_N / N`` for the linear profile."""
    return 2.0 * math.sqrt(2.0 * math.pi) / (math.sqrt(T_R) + math.sqrt(T_L))


def fourier_conductivity(T_L: float, T_R: float) -> float:
    """Conductivity of the wandering model with as many tracers as links."""
    return (math.sqrt(T_R) + math.sqrt(T_L)) / (2.0 * math.sqrt(2.0 * math.pi))


# -- invariant phase-space densities -----------------------------------------

@dataclass(frozen=True)
class CellTerm:
    """``coef * beta * exp(-beta p^2 / 2)`` on ``left <= q < right`` for one velocity sign."""

    left: float
    right: float
    sign: int
    beta: float
    coef: float

    @property
    def mass(self) -> float:
        return (self.right - self.left) * self.coef * math.sqrt(math.pi * self.beta / 2.0)

    def speed_mass(self, lo, hi):
        """Probability that ``q`` is in the cell, ``sign(p)`` matches and ``lo <= |p| < hi``."""
        s = math.sqrt(self.beta / 2.0)
        return self.mass * (erf(np.asarray(hi) * s) - erf(np.asarray(lo) * s))


class PhaseDensity:
    """Piecewise Gaussian density of one tracer on ``[0, N] x (R \\ {0})``."""

    def __init__(self, terms, n_links):
        self.terms = tuple(terms)
        self.n_links = n_links

    def __call__(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.zeros(np.broadcast(q, p).shape)
        for t in self.terms:
            inside = (q >= t.left) & (q < t.right) if t.right < self.n_links else (q >= t.left) & (q <= t.right)
            hit = inside & (np.sign(p) == t.sign)
            out = out + np.where(hit, t.coef * t.beta * np.exp(-t.beta * p * p / 2.0), 0.0)
        return out

    def total_mass(self) -> float:
        return math.fsum(t.mass for t in self.terms)

    def coefficients(self) -> np.ndarray:
        """Array of shape ``(N, 2)``: columns are the p>0 and p<0 coefficients per cell."""
        out = np.zeros((len(self.terms) // 2, 2))
        for i, t in enumerate(self.terms):
            out[i // 2, 0 if t.sign > 0 else 1] = t.coef
        return out


class ConfinedDensity:
    """Product over cells of the single-tracer densities of the confined model."""

    def __init__(self, cells):
        self.cells = tuple(cells)

    def marginal(self, n: int) -> PhaseDensity:
        return self.cells[n]

    def __call__(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.ones(np.broadcast(q[..., 0], p[..., 0]).shape)
        for n, cell in enumerate(self.cells):
            out = out * cell(q[..., n], p[..., n])
        return out

    def total_mass(self) -> float:
        return math.prod(c.total_mass() for c in self.cells)


def _basic_density(beta: float) -> PhaseDensity:
    c = math.sqrt(2.0 / (math.pi * beta))
    return PhaseDensity([CellTerm(0.0, 1.0, +1, beta, c), CellTerm(0.0, 1.0, -1, beta, 0.0)], 1)


def _general_density(profile: InverseTempProfile, Q: TransitionMatrix, nu=None) -> PhaseDensity:
    space = Q.space
    N = space.n_links
    if nu is None:
        nu = chain_stationary_distribution(Q)
    b = profile.betas
    pos = space.positions
    Z = SQRT_HALF_PI * math.fsum(nu * np.sqrt(b[pos]))
    terms = []
    for n in range(1, N + 1):
        into_right = space.arrival_state(n, +1)
        into_left = space.arrival_state(n - 1, -1)
        from_left = np.flatnonzero(pos == n - 1)
        from_right = np.flatnonzero(pos == n)
        c_pos = math.fsum(nu[from_left] * Q.entries[from_left, into_right]) / Z
        c_neg = math.fsum(nu[from_right] * Q.entries[from_right, into_left]) / Z
        terms.append(CellTerm(n - 1.0, float(n), +1, b[n - 1], c_pos))
        terms.append(CellTerm(n - 1.0, float(n), -1, b[n], c_neg))
    return PhaseDensity(terms, N)


def _wandering_density(profile: InverseTempProfile) -> PhaseDensity:
    N = profile.n_links
    b = profile.betas
    c = 1.0 / wandering_normalization(profile)
    terms = []
    for n in range(1, N + 1):
        terms.append(CellTerm(n - 1.0, float(n), +1, b[n - 1], c))
        terms.append(CellTerm(n - 1.0, float(n), -1, b[n], c))
    return PhaseDensity(terms, N)


def _confined_density(profile: InverseTempProfile) -> ConfinedDensity:
    b = profile.betas
    Zn = confined_normalizations(profile)
    cells = []
    for n in range(profile.n_links):
        c = 1.0 / Zn[n]
        cells.append(PhaseDensity([CellTerm(float(n), n + 1.0, +1, b[n], c),
                                   CellTerm(float(n), n + 1.0, -1, b[n + 1], c)], n + 1))
    return ConfinedDensity(cells)


def invariant_density(model, profile: InverseTempProfile = None, Q: TransitionMatrix = None):
    """Stationary phase-space density of ``model``.

    ``model`` is a model instance, or one of the strings ``"basic"``,
    ``"general"``, ``"wandering"``, ``"confined"`` together with ``profile``
    (and ``Q`` for the general chain; for ``"basic"`` pass ``profile`` as the
    scalar beta).
    """
    if isinstance(model, BasicModel):
        return _basic_density(model.beta)
    if isinstance(model, GeneralModel):
        return _general_density(model.profile, model.matrix)
    if isinstance(model, WanderingModel):
        return _wandering_density(model.profile)
    if isinstance(model, ConfinedModel):
        return _confined_density(model.profile)
    if model == "basic":
        return _basic_density(float(profile))
    if model == "general":
        return _general_density(profile, Q if Q is not None else wandering_transition_matrix(profile.n_links))
    if model == "wandering":
        return _wandering_density(profile)
    if model == "confined":
        return _confined_density(profile)
    raise ValueError(f"unknown model {model!r}")
