import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from hotscatter.cgf import (
    Branch,
    CgfQuery,
    big_f,
    c_factor,
    cgf,
    cgf_left_derivative,
    cgf_sweep,
    cgf_value,
    equilibrium_second_cumulant,
    green_kubo_check,
    implicit_derivative_oracle,
    log_k,
    mean_current,
    on_plateau,
    second_cumulant_closed,
)
from hotscatter.exceptions import DivergentIntegralError, DomainError, InvalidSizeError
from hotscatter.model import InverseTempProfile

betas = st.floats(0.2, 5.0)
models = st.sampled_from(["wandering", "confined"])


@st.composite
def link_queries(draw):
    b = draw(st.lists(betas, min_size=2, max_size=5))
    prof = InverseTempProfile(np.array(b))
    link = draw(st.integers(0, len(b) - 2))
    return prof, link, draw(models)


def _log_trapezoid_k(c, h=2e-3):
    # u = e^s turns K into a smooth, doubly decaying integrand where the trapezoid rule is spectral
    s = np.arange(-30.0, 4.0, h)
    u = np.exp(s)
    g = u * u * np.exp(-c / u - u * u / 2)
    return h * (g.sum() - (g[0] + g[-1]) / 2)


# -- the velocity factor -------------------------------------------------------

@given(betas, st.sampled_from([-1, 0, 1]), st.floats(-0.9, 0.9))
def test_factor_at_zero_eps_is_rational(beta, delta, frac):
    lam = frac * beta
    assert c_factor(beta, delta, lam, 0.0) == pytest.approx(beta / (beta + lam * delta), rel=1e-11)


@pytest.mark.parametrize("c", [1e-6, 0.01, 0.5, 1.0, 3.0, 20.0])
def test_k_against_trapezoid(c):
    assert math.exp(log_k(c)[0]) == pytest.approx(_log_trapezoid_k(c), rel=1e-10)


def test_k_at_one_frozen():
    assert math.exp(log_k(1.0)[0]) == pytest.approx(0.3999437786796949, rel=1e-12)


def test_k_small_argument_expansion():
    # K(c) = 1 - c sqrt(pi/2) + O(c^2 log c)
    c = 1e-7
    assert (1 - math.exp(log_k(c)[0])) / c == pytest.approx(math.sqrt(math.pi / 2), rel=1e-5)


def test_factor_rejects_divergence():
    with pytest.raises(DivergentIntegralError):
        c_factor(1.0, 1, -1.0, 0.1)
    with pytest.raises(DivergentIntegralError):
        c_factor(1.0, -1, 1.5, 0.1)
    with pytest.raises(DomainError):
        c_factor(1.0, 2, 0.1, 0.1)
    with pytest.raises(DomainError):
        c_factor(1.0, 1, 0.1, -0.1)


# -- the product and its root --------------------------------------------------

def test_product_at_zero_eps_two_scatterers():
    prof = InverseTempProfile(np.array([1.0, 2.0]))
    q = CgfQuery(0, 0.3, prof)
    assert big_f(q, 0.0) == pytest.approx(1.0 / 1.3 * 2.0 / 1.7, rel=1e-12)


@given(link_queries(), st.floats(0.0, 3.0))
@settings(max_examples=40)
def test_product_decreases_in_eps(q, eps):
    prof, link, model = q
    b = prof.betas
    lam = 0.3 * (b[link + 1] - b[link])
    query = CgfQuery(link, lam, prof, model)
    assert big_f(query, eps + 0.1) < big_f(query, eps)


def test_plateau_and_symmetry_examples():
    prof = InverseTempProfile(np.array([1.0, 2.0]))
    res = cgf_value(CgfQuery(0, 0.5, prof))
    assert res.value == 0.0 and res.branch is Branch.ZERO_PLATEAU
    assert cgf(prof, 0, -0.2) == pytest.approx(cgf(prof, 0, 1.2), abs=2e-10)
    assert cgf(prof, 0, -0.2) > 0
    assert on_plateau(0.0, 1.0, 1.0) and not on_plateau(0.1, 1.0, 1.0)


def test_equilibrium_is_zero_only_at_zero():
    prof = InverseTempProfile.constant(1.0, 3)
    assert cgf(prof, 1, 0.0) == 0.0
    vals = [r.value for r in cgf_sweep(prof, 1, [-0.5, -0.1, 0.1, 0.5])]
    assert all(v > 0 for v in vals)
    assert vals[0] == pytest.approx(vals[3], rel=1e-9)


def test_query_validation():
    prof = InverseTempProfile(np.array([1.0, 2.0, 3.0]))
    with pytest.raises(DomainError):
        CgfQuery(0, 2.0, prof)
    with pytest.raises(DomainError):
        CgfQuery(0, -1.0, prof)
    with pytest.raises(InvalidSizeError):
        CgfQuery(2, 0.1, prof)
    with pytest.raises(DomainError):
        CgfQuery(0, 0.1, prof, "general")


@given(link_queries(), st.floats(0.01, 0.99))
@settings(max_examples=40)
def test_gallavotti_cohen_symmetry(q, frac):
    prof, link, model = q
    bn, bn1 = prof.betas[link], prof.betas[link + 1]
    lam = -bn + frac * (bn + bn1)
    assert cgf(prof, link, lam, model) == pytest.approx(cgf(prof, link, bn1 - bn - lam, model), abs=2e-10)


@given(link_queries(), st.floats(0.02, 0.98), st.floats(0.005, 0.02))
@settings(max_examples=40)
def test_convex_and_nonnegative(q, frac, width):
    prof, link, model = q
    bn, bn1 = prof.betas[link], prof.betas[link + 1]
    span = bn + bn1
    lam = -bn + frac * span
    h = width * span
    assume(-bn < lam - h and lam + h < bn1)
    f = [cgf(prof, link, x, model) for x in (lam - h, lam, lam + h)]
    assert min(f) >= 0.0
    assert f[0] + f[2] - 2 * f[1] >= -1e-8


@given(link_queries())
@settings(max_examples=30)
def test_strictly_positive_off_plateau(q):
    prof, link, model = q
    bn, bn1 = prof.betas[link], prof.betas[link + 1]
    lo, hi = min(0.0, bn1 - bn), max(0.0, bn1 - bn)
    step = 0.05 * min(bn, bn1)
    assert cgf(prof, link, lo - step, model) > 1e-8
    assert cgf(prof, link, hi + step, model) > 1e-8


@given(link_queries(), st.sampled_from([0.1, 0.5, 0.9]))
@settings(max_examples=30)
def test_root_is_bracketed(q, frac):
    prof, link, model = q
    bn, bn1 = prof.betas[link], prof.betas[link + 1]
    lam = bn1 - bn + frac * bn if bn1 - bn + frac * bn < bn1 else -frac * bn
    assume(not on_plateau(lam, bn, bn1))
    res = cgf_value(CgfQuery(link, lam, prof, model))
    assert res.branch is Branch.POSITIVE_ROOT
    query = CgfQuery(link, lam, prof, model)
    eps = res.value
    assert big_f(query, eps * (1 - 1e-6)) > 1 > big_f(query, eps * (1 + 1e-6))


# -- derivatives and cumulants -------------------------------------------------

def test_derivative_at_zero_hot_left():
    prof = InverseTempProfile.from_temperatures([2.0, 1.0])
    d = cgf_left_derivative(0, prof)
    assert d == pytest.approx(-0.46738995451021825, rel=1e-8)
    assert d == pytest.approx(-mean_current(0, prof), rel=1e-8)


def test_derivative_vanishes_in_equilibrium():
    prof = InverseTempProfile.constant(1.3, 2)
    assert abs(cgf_left_derivative(0, prof)) < 1e-9


@given(link_queries())
@settings(max_examples=20)
def test_derivative_matches_implicit_oracle(q):
    prof, link, model = q
    assume(abs(prof.betas[link] - prof.betas[link + 1]) > 1e-3)
    oracle = implicit_derivative_oracle(link, prof, model)
    assert cgf_left_derivative(link, prof, model) == pytest.approx(oracle, rel=1e-7, abs=1e-9)
    assert oracle == pytest.approx(-mean_current(link, prof, model), rel=1e-10)


def test_quadrature_partials_by_hand():
    # beta int v^3/2 e^{-beta v^2/2} dv = 1/beta, beta int e^{-beta v^2/2} dv = sqrt(pi beta/2)
    b = 0.7
    assert b * integrate.quad(lambda v: 0.5 * v ** 3 * math.exp(-b * v * v / 2), 0, math.inf)[0] == pytest.approx(1 / b)


@pytest.mark.parametrize("N,beta,expected", [(1, 1.0, 0.7978845608028654), (2, 1.0, 0.3989422804014327), (2, 4.0, 0.012466946262544772)])
def test_second_cumulant(N, beta, expected):
    sc = equilibrium_second_cumulant(N, beta)
    assert sc.closed == pytest.approx(expected, rel=1e-9)
    assert sc.numeric == pytest.approx(sc.closed, rel=1e-7)


def test_green_kubo():
    g1 = green_kubo_check(2, 1.0)
    g4 = green_kubo_check(2, 4.0)
    for g in (g1, g4):
        assert g.lhs == pytest.approx(g.closed, rel=1e-7)
        assert g.rhs_mixed == pytest.approx(g.closed, rel=1e-7)
        assert g.rhs_numeric == pytest.approx(g.closed, rel=1e-5)
    assert g1.closed / g4.closed == pytest.approx(32.0, rel=1e-12)
    with pytest.raises(InvalidSizeError):
        green_kubo_check(1, 1.0)
    with pytest.raises(InvalidSizeError):
        second_cumulant_closed(0, 1.0)
