"""Desk-scale acceptance checks, shared by ``hotscatter verify`` and the test suite.

Each check takes its tolerances as keyword arguments and returns a
:class:`CriterionResult`; nothing here raises on a failed comparison.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special, stats

from . import cgf as C
from .analytic import confined_stationary, invariant_density, wandering_stationary
from .model import ConfinedModel, InverseTempProfile, TransitionMatrix, WanderingModel
from .sampling import RngStream
from .selfconsistent import (
    confined_profile,
    convergence_table,
    finite_conductivity,
    local_conductivity,
    wandering_profile,
)
from .simulate import (
    HeavyTailWarning,
    estimate_empirical_cgf,
    integrated_currents,
    phase_histogram,
    run_basic,
    run_general,
    run_replicas,
    summarize_replicas,
)

DEFAULT_SEED = 20240611


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""
    elapsed: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.key}: {self.title} | {self.detail} | {self.elapsed:.1f}s"


def _timed(key, title):
    """Attach key and title, time the check, and enforce ``max_seconds`` when present."""
    def wrap(fn):
        defaults = dict(fn.__kwdefaults__ or {})

        def run(**kw):
            t0 = time.perf_counter()
            res = fn(**kw)
            res.key, res.title = key, title
            res.elapsed = time.perf_counter() - t0
            limit = kw.get("max_seconds", defaults.get("max_seconds"))
            if limit is not None and res.elapsed > limit:
                res.passed = False
                res.detail += f"; runtime {res.elapsed:.1f}s > {limit}s"
            return res

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.key = key
        run.defaults = defaults
        return run
    return wrap


def _r(passed, detail, **measured):
    return CriterionResult("", "", bool(passed), measured, detail)


# -- basic process ------------------------------------------------------------

def _basic_samples(seed, beta=1.0, t_end=1e5, n_samples=10_000):
    ts = np.linspace(t_end / 100, t_end, n_samples)
    return run_basic(beta, 0.5, 1.0, t_end, RngStream(seed, 1), ts)


def _ks_crit(n, alpha=0.01):
    return float(stats.kstwo.ppf(1 - alpha, n))


def span_cdf(x, beta):
    """CDF of ``x psi(x) / mu``: ``erfc(sqrt(beta/2) / x)``."""
    return special.erfc(np.sqrt(beta / 2.0) / np.asarray(x))


def age_cdf(x, beta):
    """CDF of the stationary age, density ``P(tau > x) / mu``."""
    x = np.asarray(x, dtype=float)
    a = beta / 2.0
    mu = math.sqrt(math.pi * beta / 2.0)
    return (x - x * np.exp(-a / x ** 2) + math.sqrt(math.pi * a) * special.erfc(math.sqrt(a) / x)) / mu


@_timed("1", "basic process invariant measure")
def criterion_1(*, seed=DEFAULT_SEED, alpha=0.01, max_seconds=10.0):
    r = _basic_samples(seed)
    crit = _ks_crit(r.p.size, alpha)
    ks_p = stats.kstest(r.p, lambda x: special.erf(np.asarray(x) / math.sqrt(2.0))).statistic
    ks_q = stats.kstest(r.q, "uniform").statistic
    ok = ks_p < crit and ks_q < crit
    return _r(ok, f"KS(p)={ks_p:.4f}, KS(q)={ks_q:.4f}, critical={crit:.4f}", ks_p=ks_p, ks_q=ks_q, critical=crit)


@_timed("2", "age law against x psi(x)/mu")
def criterion_2(*, seed=DEFAULT_SEED, alpha=0.01):
    r = _basic_samples(seed)
    crit = _ks_crit(r.age.size, alpha)
    ks = stats.kstest(r.age, lambda x: span_cdf(x, 1.0)).statistic
    return _r(ks < crit, f"KS(age vs x psi/mu)={ks:.4f}, critical={crit:.4f}", ks=ks, critical=crit)


@_timed("2a", "age law P(tau>x)/mu and span law x psi(x)/mu")
def criterion_2a(*, seed=DEFAULT_SEED, alpha=0.01):
    r = _basic_samples(seed)
    crit = _ks_crit(r.age.size, alpha)
    ks_age = stats.kstest(r.age, lambda x: age_cdf(x, 1.0)).statistic
    ks_res = stats.kstest(r.residual, lambda x: age_cdf(x, 1.0)).statistic
    ks_span = stats.kstest(r.age + r.residual, lambda x: span_cdf(x, 1.0)).statistic
    ok = max(ks_age, ks_res, ks_span) < crit
    return _r(ok, f"KS age={ks_age:.4f}, residual={ks_res:.4f}, span={ks_span:.4f}, critical={crit:.4f}",
              ks_age=ks_age, ks_residual=ks_res, ks_span=ks_span, critical=crit)


# -- wandering and confined observables ---------------------------------------

@lru_cache(maxsize=4)
def _wandering_run(seed, n_replicas):
    prof = wandering_profile(1.0, 2.0, 4).profile
    leds = run_replicas(WanderingModel(prof, 1), 1e6, n_replicas, RngStream(seed, 3))
    return prof, summarize_replicas(leds)


@_timed("3", "wandering collision frequencies")
def criterion_3(*, seed=DEFAULT_SEED, n_replicas=32, rel_tol=0.01, max_seconds=60.0):
    prof, s = _wandering_run(seed, n_replicas)
    rep = wandering_stationary(prof)
    err = np.abs(s.mean["collision_frequency"] / rep.frequencies - 1)
    return _r(err.max() <= rel_tol, f"max rel err {err.max():.2e} (tol {rel_tol})",
              measured=s.mean["collision_frequency"].tolist(), expected=rep.frequencies.tolist())


@_timed("4", "wandering stationary currents and entropy rate")
def criterion_4(*, seed=DEFAULT_SEED, n_replicas=32, current_tol=0.02, entropy_tol=0.05):
    prof, s = _wandering_run(seed, n_replicas)
    rep = wandering_stationary(prof)
    err_j = np.abs(s.mean["link_current"] / rep.currents - 1)
    err_s = abs(s.mean["entropy_flow"] / rep.entropy_rate - 1)
    ok = err_j.max() <= current_tol and err_s <= entropy_tol
    return _r(ok, f"current max rel err {err_j.max():.2e}, entropy rel err {err_s:.2e}",
              currents=s.mean["link_current"].tolist(), expected=rep.currents.tolist(),
              entropy=float(s.mean["entropy_flow"]), expected_entropy=rep.entropy_rate)


@_timed("5", "confined self-consistency")
def criterion_5(*, seed=DEFAULT_SEED, n_replicas=16, t_end=1e6, n_sigma=3.0, current_tol=0.02):
    prof = confined_profile(1.0, 4.0, 8).profile
    s = summarize_replicas(run_replicas(ConfinedModel(prof), t_end, n_replicas, RngStream(seed, 5)))
    rep = confined_stationary(prof)
    E, se = s.mean["energy_exchanged"][1:-1], s.stderr["energy_exchanged"][1:-1]
    z = np.abs(E) / se
    err_j = np.abs(s.mean["link_current"] / rep.currents - 1)
    ok = z.max() < n_sigma and err_j.max() <= current_tol
    return _r(ok, f"max |E_n|/SE={z.max():.2f} (< {n_sigma}), current max rel err {err_j.max():.2e}",
              interior_E=E.tolist(), stderr=se.tolist(), currents=s.mean["link_current"].tolist())


# -- cumulant generating function ---------------------------------------------

CGF_PAIR = InverseTempProfile(np.array([1.0, 2.0]))


def criterion_6_grid():
    return np.array([(k - 14) / 14 for k in range(1, 42)])


@_timed("6", "cgf root branch, plateau and symmetry")
def criterion_6(*, residual_tol=1e-10, gc_tol=2e-10, max_seconds=30.0):
    lams = criterion_6_grid()
    res = C.cgf_sweep(CGF_PAIR, 0, lams)
    vals = np.array([r.value for r in res])
    root = [r for r in res if r.branch is C.Branch.POSITIVE_ROOT]
    worst_res = max(r.root_residual for r in root)
    in_plateau = (lams >= 0) & (lams <= 1)
    plateau_ok = np.all((vals == 0) == in_plateau)
    gc = np.abs(vals - vals[::-1]).max()
    ok = worst_res <= residual_tol and plateau_ok and gc <= gc_tol
    return _r(ok, f"max residual {worst_res:.1e}, zeros exactly on [0,1]: {bool(plateau_ok)}, GC gap {gc:.1e}",
              max_residual=worst_res, gc_gap=float(gc), n_zero=int((vals == 0).sum()))


@_timed("7", "empirical vs analytic cgf")
def criterion_7(*, seed=DEFAULT_SEED, lams=(-0.5, -0.2), n_replicas=10_000, t=200.0, rel_tol=0.10,
                max_seconds=300.0):
    model = WanderingModel(CGF_PAIR, 1)
    J = integrated_currents(model, 0, t, n_replicas, RngStream(seed, 7))
    parts, ok, warned = [], True, 0
    measured = {}
    for lam in lams:
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always", HeavyTailWarning)
            est = estimate_empirical_cgf(model, 0, lam, t, n_replicas, None, currents=J)
        warned += sum(issubclass(x.category, HeavyTailWarning) for x in w)
        exact = C.cgf(CGF_PAIR, 0, lam)
        err = abs(est.value / exact - 1)
        ok &= err <= rel_tol
        parts.append(f"lambda={lam}: {est.value:.4f}+-{est.stderr:.4f} vs {exact:.4f} "
                     f"(rel err {err:.3f}, max share {est.max_weight_share:.2f})")
        measured[str(lam)] = dict(estimate=est.value, stderr=est.stderr, exact=exact,
                                  max_weight_share=est.max_weight_share)
    parts.append(f"heavy-tail warnings: {warned}")
    return _r(ok, "; ".join(parts), **measured)


@_timed("8", "left derivative at 0")
def criterion_8(*, rel_tol=1e-6, oracle_tol=1e-8):
    cases = [CGF_PAIR, InverseTempProfile.from_temperatures([2.0, 1.0]),
             wandering_profile(1.0, 2.0, 4).profile]
    worst_rel, worst_abs = 0.0, 0.0
    for prof in cases:
        num = C.cgf_left_derivative(0, prof)
        closed = -C.mean_current(0, prof)
        oracle = C.implicit_derivative_oracle(0, prof)
        worst_rel = max(worst_rel, abs(num / closed - 1))
        worst_abs = max(worst_abs, abs(num - oracle))
    ok = worst_rel <= rel_tol and worst_abs <= oracle_tol
    return _r(ok, f"max rel err vs closed {worst_rel:.1e}, max |numeric - oracle| {worst_abs:.1e}",
              rel_err=worst_rel, oracle_gap=worst_abs)


@_timed("9", "equilibrium second cumulant")
def criterion_9(*, seed=DEFAULT_SEED, rel_tol=1e-6, n_replicas=10_000, t=1000.0, empirical_tol=0.05):
    worst = 0.0
    for N, beta in ((1, 1.0), (2, 1.0), (1, 4.0)):
        s = C.equilibrium_second_cumulant(N, beta)
        worst = max(worst, abs(s.numeric / s.closed - 1))
    model = WanderingModel(InverseTempProfile.constant(1.0, 1), 1)
    J = integrated_currents(model, 0, t, n_replicas, RngStream(seed, 9))
    var_rate = float(np.mean(J * J) / t)
    closed = C.second_cumulant_closed(1, 1.0)
    emp_err = abs(var_rate / closed - 1)
    ok = worst <= rel_tol and emp_err <= empirical_tol
    return _r(ok, f"finite-difference max rel err {worst:.1e}; empirical E[J^2]/t={var_rate:.4f} "
                  f"vs {closed:.4f} (rel err {emp_err:.3f})",
              fd_rel_err=worst, empirical=var_rate, closed=closed)


@_timed("10", "Green-Kubo relation")
def criterion_10(*, closed_tol=1e-6, numeric_tol=1e-4):
    g = C.green_kubo_check(2, 1.0)
    e1 = abs(g.lhs / g.closed - 1)
    e2 = abs(g.rhs_mixed / g.closed - 1)
    e3 = abs(g.rhs_numeric / g.closed - 1)
    ok = max(e1, e2) <= closed_tol and e3 <= numeric_tol
    return _r(ok, f"lhs {g.lhs:.8f}, mixed {g.rhs_mixed:.8f}, closed {g.closed:.8f}, "
                  f"numeric {g.rhs_numeric:.8f}", lhs=g.lhs, rhs_mixed=g.rhs_mixed, closed=g.closed,
              rhs_numeric=g.rhs_numeric)


@_timed("11", "continuum limit of the confined profile")
def criterion_11(*, min_rate=0.8, kappa_tol=0.01, max_seconds=5.0):
    rows = convergence_table(1.0, 4.0)
    rates = [r[2] for r in rows[1:]]
    sol = confined_profile(1.0, 4.0, 200)
    kap = finite_conductivity(sol, 0.5)
    cont = local_conductivity(1.0, 4.0, 0.5)
    kerr = abs(kap / cont - 1)
    ok = min(rates) >= min_rate and kerr <= kappa_tol
    return _r(ok, "errors " + ", ".join(f"{e:.2e}" for _, e, _ in rows)
              + f"; min log2 rate {min(rates):.2f}; kappa rel err {kerr:.2e}",
              errors=[r[1] for r in rows], rates=rates, kappa=kap, kappa_continuum=cont)


def speed_edges(beta, n_bins):
    """Equal-mass bins of the half-normal speed law; the last bin is open."""
    u = np.arange(n_bins) / n_bins
    edges = special.ndtri(0.5 + 0.5 * u) / math.sqrt(beta)
    return np.append(edges, np.inf)


def general_chi2(profile, Q, seed, n_samples=20_000, spacing=20.0, n_bins=10):
    """Chi-square test of sampled ``(cell, sign, |p|)`` counts against the invariant density."""
    ts = spacing * np.arange(1, n_samples + 1)
    run = run_general(profile, Q, ts[-1], RngStream(seed, 12), sample_times=ts, t_burn=0.0)
    beta_ref = float(np.mean(profile.betas))
    edges = speed_edges(beta_ref, n_bins)
    counts = phase_histogram(run.q.ravel(), run.p.ravel(), profile.n_links, edges)
    dens = invariant_density("general", profile, Q)
    expected = np.zeros_like(counts, dtype=float)
    for term in dens.terms:
        cell = int(term.left)
        sgn = 0 if term.sign > 0 else 1
        expected[cell, sgn] += term.speed_mass(edges[:-1], edges[1:])
    expected *= n_samples / dens.total_mass()
    keep = expected > 0
    stat = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


@_timed("12", "general-model invariant measure")
def criterion_12(*, seed=DEFAULT_SEED, min_pvalue=0.01):
    prof = InverseTempProfile.constant(1.0, 2)
    Q = TransitionMatrix.from_reflection(2, 0.5)
    stat, dof, pval = general_chi2(prof, Q, seed)
    return _r(pval > min_pvalue, f"chi2={stat:.1f} on {dof} dof, p={pval:.3f}", chi2=stat, dof=dof, pvalue=pval)


CRITERIA: dict[str, Callable[..., CriterionResult]] = {
    f.key: f for f in (criterion_1, criterion_2, criterion_2a, criterion_3, criterion_4, criterion_5,
                       criterion_6, criterion_7, criterion_8, criterion_9, criterion_10, criterion_11,
                       criterion_12)
}
FAST = ("1", "2", "2a", "3", "4", "6", "8", "10", "11", "12")


def run_suite(keys=None, fast=False, seed=DEFAULT_SEED, overrides=None, echo=None) -> list[CriterionResult]:
    """Run the selected criteria; ``overrides`` maps a key to extra keyword arguments."""
    if keys is None:
        keys = FAST if fast else tuple(CRITERIA)
    overrides = overrides or {}
    out = []
    for key in keys:
        fn = CRITERIA[key]
        kw = dict(overrides.get(key, {}))
        if "seed" in fn.defaults:
            kw.setdefault("seed", seed)
        res = fn(**kw)
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out
