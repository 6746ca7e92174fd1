"""Cumulant generating function of the time-integrated energy current.

For link ``n`` and ``lambda`` in ``(-beta_n, beta_{n+1})`` the growth rate
``f_n(lambda)`` of ``E exp(-lambda J_n([0, t]))`` is either zero (on the
plateau between 0 and ``beta_{n+1} - beta_n``) or the unique ``eps > 0``
solving ``F_n(lambda, eps) = 1``, where ``F_n`` is a product of one velocity
integral per chain state:

    C(beta, Delta, lambda, eps) = beta * int_0^inf v exp(-eps/v - (beta + lambda Delta) v^2 / 2) dv.

With ``a = beta + lambda Delta`` and ``v = u / sqrt(a)`` this is
``(beta / a) K(eps sqrt(a))`` with ``K(c) = int_0^inf u exp(-c/u - u^2/2) du``,
which is what gets integrated.  Everything is carried in logarithms.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import integrate, optimize

from .analytic import confined_stationary, wandering_stationary
from .exceptions import DivergentIntegralError, DomainError, InvalidSizeError, SolverError
from .model import InverseTempProfile

QUAD_EPSREL = 1e-13
QUAD_EPSABS = 0.0
ROOT_TOL = 1e-10
SMALL_C = 1.0
SQRT_HALF_PI = math.sqrt(math.pi / 2.0)

ModelName = Literal["wandering", "confined"]


class Branch(enum.Enum):
    POSITIVE_ROOT = "PositiveRoot"
    ZERO_PLATEAU = "ZeroPlateau"

    def __str__(self):
        return self.value


# -- the velocity integral ----------------------------------------------------

def _quad(func, a, b):
    val, err = integrate.quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return val, err


def _mode(c: float) -> float:
    """Maximiser of ``u exp(-c/u - u^2/2)``: the positive root of ``u^3 - u - c``."""
    if c == 0.0:
        return 1.0
    hi = 1.0 + c ** (1.0 / 3.0)
    return optimize.brentq(lambda u: u ** 3 - u - c, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@lru_cache(maxsize=65536)
def log_k(c: float) -> tuple[float, float]:
    """``log K(c)`` and an estimate of its absolute error, for ``c >= 0``."""
    if c < 0 or not math.isfinite(c):
        raise DomainError(f"K(c) needs c >= 0, got {c}")
    if c == 0.0:
        return 0.0, 0.0
    if c <= SMALL_C:
        # 1 - K(c) = int u e^{-u^2/2} (1 - e^{-c/u}) du, accurate as c -> 0
        g = lambda u: u * math.exp(-u * u / 2.0) * -math.expm1(-c / u) if u > 0 else 0.0
        d1, e1 = _quad(g, 0.0, 1.0)
        d2, e2 = _quad(g, 1.0, math.inf)
        d = d1 + d2
        return math.log1p(-d), (e1 + e2) / (1.0 - d)
    m = _mode(c)
    log_peak = math.log(m) - c / m - m * m / 2.0
    g = lambda u: math.exp(math.log(u) - c / u - u * u / 2.0 - log_peak) if u > 0 else 0.0
    i1, e1 = _quad(g, 0.0, m)
    i2, e2 = _quad(g, m, math.inf)
    i = i1 + i2
    return log_peak + math.log(i), (e1 + e2) / i


def _check_factor_args(beta, delta, lam, eps):
    if not (math.isfinite(beta) and beta > 0):
        raise DomainError(f"beta must be positive, got {beta}")
    if delta not in (-1, 0, 1):
        raise DomainError(f"Delta must be -1, 0 or +1, got {delta}")
    if not (eps >= 0 and math.isfinite(eps)):
        raise DomainError(f"eps must be >= 0, got {eps}")
    a = beta + lam * delta
    if not a > 0:
        raise DivergentIntegralError(f"beta + lambda*Delta = {a} <= 0: the velocity integral diverges")
    return a


def log_c_factor(beta: float, delta: int, lam: float, eps: float) -> tuple[float, float]:
    """``log C`` and its absolute error estimate."""
    a = _check_factor_args(beta, delta, lam, eps)
    lk, err = log_k(float(eps * math.sqrt(a)))
    return -math.log1p(lam * delta / beta) + lk, err


def c_factor(beta: float, delta: int, lam: float, eps: float) -> float:
    return math.exp(log_c_factor(beta, delta, lam, eps)[0])


# -- the product F and the root ----------------------------------------------

@dataclass(frozen=True)
class CgfQuery:
    link: int
    lam: float
    profile: InverseTempProfile
    model: ModelName = "wandering"

    def __post_init__(self):
        if self.model not in ("wandering", "confined"):
            raise DomainError(f"model must be 'wandering' or 'confined', got {self.model!r}")
        N = self.profile.n_links
        if int(self.link) != self.link or not 0 <= self.link < N:
            raise InvalidSizeError(f"link must be in 0..{N - 1}, got {self.link}")
        b = self.profile.betas
        if not (-b[self.link] < self.lam < b[self.link + 1]):
            raise DomainError(f"lambda={self.lam} outside ({-b[self.link]}, {b[self.link + 1]})")

    @property
    def beta_pair(self) -> tuple[float, float]:
        b = self.profile.betas
        return float(b[self.link]), float(b[self.link + 1])

    def factor_groups(self) -> Counter:
        """Multiplicity of each distinct ``(beta, Delta)`` among the chain states."""
        bn, bn1 = self.beta_pair
        groups = Counter({(bn, 1): 1})
        groups[(bn1, -1)] += 1
        if self.model == "wandering":
            b = self.profile.betas
            N = self.profile.n_links
            for i in range(N + 1):
                visits = 1 if i in (0, N) else 2
                visits -= (i == self.link) + (i == self.link + 1)
                if visits:
                    groups[(float(b[i]), 0)] += visits
        return groups


def log_big_f(query: CgfQuery, eps: float) -> tuple[float, float]:
    """``log F_n(lambda, eps)`` and an absolute error estimate."""
    total, err = 0.0, 0.0
    for (beta, delta), mult in query.factor_groups().items():
        lc, e = log_c_factor(beta, delta, query.lam, eps)
        total += mult * lc
        err += mult * e
    return total, err


def big_f(query: CgfQuery, eps: float) -> float:
    return math.exp(log_big_f(query, eps)[0])


def on_plateau(lam: float, beta_n: float, beta_n1: float) -> bool:
    d = beta_n1 - beta_n
    return min(0.0, d) <= lam <= max(0.0, d)


@dataclass(frozen=True)
class CgfResult:
    value: float
    branch: Branch
    root_residual: float
    quadrature_error_bound: float


def cgf_value(query: CgfQuery) -> CgfResult:
    """``f_n(lambda)``: zero on the plateau, otherwise the root of ``F_n = 1``."""
    bn, bn1 = query.beta_pair
    if on_plateau(query.lam, bn, bn1):
        return CgfResult(0.0, Branch.ZERO_PLATEAU, 0.0, 0.0)
    g = lambda e: log_big_f(query, e)[0]
    lo, hi = 0.0, 1.0
    while g(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SolverError("could not bracket the root of F = 1", lam=query.lam, link=query.link)
    root, info = optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                 maxiter=500, full_output=True)
    if not info.converged:
        raise SolverError("Brent iteration did not converge", lam=query.lam, iterations=info.iterations)
    lf, qerr = log_big_f(query, root)
    residual = abs(math.expm1(lf))
    if residual > ROOT_TOL:
        raise SolverError("root residual above tolerance", residual=residual, root=root)
    return CgfResult(root, Branch.POSITIVE_ROOT, residual, qerr)


def cgf(profile: InverseTempProfile, link: int, lam: float, model: ModelName = "wandering") -> float:
    return cgf_value(CgfQuery(link, lam, profile, model)).value


def cgf_sweep(profile: InverseTempProfile, link: int, lams, model: ModelName = "wandering") -> list[CgfResult]:
    return [cgf_value(CgfQuery(link, float(l), profile, model)) for l in lams]


# -- derivatives --------------------------------------------------------------

DERIVATIVE_STEP = 1e-3
SECOND_STEP = 1e-2

# F(lambda, eps) is not smooth in eps at 0 (K(c) has a c^2 log c term), so
# the root carries h^k log^j h terms and plain power-series Richardson stalls
# at first order.  Extrapolation is done on a basis that includes the logs.


def _extrapolate(hs: np.ndarray, values: np.ndarray, columns) -> float:
    A = np.stack([np.ones_like(hs)] + [c(hs) for c in columns], axis=1)
    return float(np.linalg.solve(A, values)[0])


_FIRST_ORDER_BASIS = (
    lambda h: h * np.log(h),
    lambda h: h,
    lambda h: h * h * np.log(h) ** 2,
    lambda h: h * h * np.log(h),
)
_SECOND_ORDER_BASIS = (
    lambda h: h * h * np.log(h),
    lambda h: h * h,
)


def cgf_left_derivative(link: int, profile: InverseTempProfile, model: ModelName = "wandering",
                        step: float = DERIVATIVE_STEP) -> float:
    """One-sided derivative of ``f_n`` at 0 on the side away from the plateau.

    For ``beta_n < beta_{n+1}`` this is the derivative at ``0-``; for the
    opposite orientation the plateau lies left of 0 and the derivative is
    taken at ``0+``.  Both equal minus the mean current.  Difference
    quotients at ``h, h/2, ..., h/16`` with ``h = step * min(beta_n, beta_{n+1})``
    are extrapolated to ``h = 0``.
    """
    b = profile.betas
    bn, bn1 = float(b[link]), float(b[link + 1])
    s = -1.0 if bn <= bn1 else 1.0
    hs = step * min(bn, bn1) / 2.0 ** np.arange(len(_FIRST_ORDER_BASIS) + 1)
    quot = np.array([s * cgf(profile, link, s * h, model) / h for h in hs])
    return _extrapolate(hs, quot, _FIRST_ORDER_BASIS)


def implicit_derivative_oracle(link: int, profile: InverseTempProfile, model: ModelName = "wandering") -> float:
    """``-F_lambda / F_eps`` at ``(0, 0)``, both partials by quadrature of the velocity integrals."""
    q = CgfQuery(link, 0.0, profile, model)
    f_lam, f_eps = 0.0, 0.0
    for (beta, delta), mult in q.factor_groups().items():
        if delta:
            # d/dlambda of beta int v e^{-(beta + lambda Delta) v^2/2} dv at lambda = 0
            f_lam += mult * -delta * beta * integrate.quad(
                lambda v: 0.5 * v ** 3 * math.exp(-beta * v * v / 2.0), 0, math.inf, epsrel=1e-13)[0]
        f_eps += mult * -beta * integrate.quad(lambda v: math.exp(-beta * v * v / 2.0), 0, math.inf,
                                               epsrel=1e-13)[0]
    return -f_lam / f_eps


def mean_current(link: int, profile: InverseTempProfile, model: ModelName = "wandering") -> float:
    rep = wandering_stationary(profile) if model == "wandering" else confined_stationary(profile)
    return float(rep.currents[link])


def second_cumulant_closed(n_links: int, beta: float) -> float:
    """Equilibrium current variance rate ``(1/N) sqrt(2 / (pi beta^5))``."""
    if n_links < 1:
        raise InvalidSizeError("N must be >= 1")
    if not beta > 0:
        raise DomainError("beta must be positive")
    return math.sqrt(2.0 / (math.pi * beta ** 5)) / n_links


@dataclass(frozen=True)
class SecondCumulant:
    closed: float
    numeric: float


def equilibrium_second_cumulant(n_links: int, beta: float, step: float = SECOND_STEP,
                                link: int = 0) -> SecondCumulant:
    """Closed form and an extrapolated central second difference of ``f`` at 0."""
    closed = second_cumulant_closed(n_links, beta)
    prof = InverseTempProfile.constant(beta, n_links)
    hs = step * beta / 2.0 ** np.arange(len(_SECOND_ORDER_BASIS) + 1)
    central = np.array([(cgf(prof, link, h) + cgf(prof, link, -h)) / (h * h) for h in hs])
    return SecondCumulant(closed, _extrapolate(hs, central, _SECOND_ORDER_BASIS))


@dataclass(frozen=True)
class GreenKuboCheck:
    lhs: float
    rhs_mixed: float
    closed: float
    rhs_numeric: float


def perturbed_profile(n_links: int, beta: float, link: int, dbeta: float) -> InverseTempProfile:
    b = np.full(n_links + 1, float(beta))
    b[link] -= dbeta / 2.0
    b[link + 1] += dbeta / 2.0
    return InverseTempProfile(b)


def _slope_in_dbeta(func, delta):
    """Central difference in the gradient, Richardson-combined over ``delta, delta/2``."""
    c1 = (func(delta) - func(-delta)) / (2.0 * delta)
    c2 = (func(delta / 2) - func(-delta / 2)) / delta
    return (4.0 * c2 - c1) / 3.0


def green_kubo_check(n_links: int, beta: float, link: int = 0, delta: float = 1e-3,
                     numeric: bool = True) -> GreenKuboCheck:
    """Equilibrium variance rate against minus twice the mixed derivative.

    ``rhs_mixed`` differences the closed mean-current slope ``-J_n`` of the
    profile ``beta_n = beta - d/2, beta_{n+1} = beta + d/2`` in ``d``;
    ``rhs_numeric`` does the same with the numerical one-sided derivative.
    """
    if n_links < 2:
        raise InvalidSizeError("Green-Kubo check needs N >= 2 (an interior pair of scatterers)")
    if not 0 <= link <= n_links - 2:
        raise InvalidSizeError(f"link must be in 0..{n_links - 2}")
    closed = second_cumulant_closed(n_links, beta)
    lhs = equilibrium_second_cumulant(n_links, beta, link=link).numeric
    d = delta * beta
    slope = lambda db: -mean_current(link, perturbed_profile(n_links, beta, link, db))
    rhs_mixed = -2.0 * _slope_in_dbeta(slope, d)
    rhs_numeric = math.nan
    if numeric:
        nslope = lambda db: cgf_left_derivative(link, perturbed_profile(n_links, beta, link, db))
        rhs_numeric = -2.0 * _slope_in_dbeta(nslope, d)
    return GreenKuboCheck(lhs, rhs_mixed, closed, rhs_numeric)
