import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hotscatter.analytic import confined_stationary, invariant_density
from hotscatter.exceptions import DomainError, InvalidSizeError
from hotscatter.model import (
    ConfinedModel,
    GeneralModel,
    InverseTempProfile,
    TransitionMatrix,
    WanderingModel,
    wandering_transition_matrix,
)
from hotscatter.sampling import RngStream, emission_speed_from_uniform
from hotscatter.selfconsistent import confined_profile
from hotscatter.simulate import (
    AgeResidualSample,
    HeavyTailWarning,
    ObservableLedger,
    estimate_empirical_cgf,
    integrated_currents,
    run_basic,
    run_confined,
    run_general,
    run_replicas,
    run_wandering,
    simulate_tracer,
    summarize_replicas,
)
from hotscatter.acceptance import general_chi2

temps = st.floats(0.3, 4.0)
profiles = st.lists(temps, min_size=2, max_size=6).map(InverseTempProfile.from_temperatures)
seeds = st.integers(0, 2 ** 32)


# -- basic process ------------------------------------------------------------

def test_basic_rejects_bad_initial_points():
    rng = RngStream(0)
    for q0, p0 in ((1.0, 1.0), (-0.1, 1.0), (0.5, 0.0), (0.5, -1.0)):
        with pytest.raises(DomainError):
            run_basic(1.0, q0, p0, 10.0, rng)
    with pytest.raises(DomainError):
        run_basic(0.0, 0.5, 1.0, 10.0, rng)


@given(seeds, st.floats(0.0, 0.99), st.floats(0.1, 10.0))
@settings(max_examples=30)
def test_basic_collision_count_matches_renewal_oracle(seed, q0, p0):
    t_end = 300.0
    run = run_basic(1.0, q0, p0, t_end, RngStream(seed))
    # same uniforms drawn in one block: arrival times S_0, S_1, ...
    u = RngStream(seed).substream(0).uniform(5000)
    S = (1 - q0) / p0 + np.concatenate(([0.0], np.cumsum(1.0 / emission_speed_from_uniform(u, 1.0))))
    assert run.n_collisions == int(np.sum(S <= t_end))


def test_basic_collision_rate_fast_start():
    t_end = 1e6
    run = run_basic(1.0, 0.0, 1e6, t_end, RngStream(21))
    assert run.n_collisions / t_end == pytest.approx(1 / math.sqrt(math.pi / 2), rel=0.01)


def test_age_residual_relations():
    ts = np.linspace(0.0, 500.0, 2001)
    run = run_basic(2.0, 0.3, 0.8, 500.0, RngStream(22), ts)
    ar = run.age_residual
    assert isinstance(ar, AgeResidualSample)
    assert np.all(ar.age >= 0) and np.all(ar.residual > 0)
    np.testing.assert_allclose(run.q, ar.q, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(run.p, ar.p, rtol=1e-12)
    # before the first hit the phase point moves freely
    assert run.q[0] == 0.3 and run.p[0] == 0.8
    assert np.all((run.q >= 0) & (run.q < 1))


def test_basic_stationary_speed_law():
    ts = np.linspace(1000.0, 2e5, 10_000)
    run = run_basic(2.0, 0.1, 1.0, 2e5, RngStream(23), ts)
    cdf = lambda x: 2 * stats.norm.cdf(np.sqrt(2.0) * np.asarray(x)) - 1
    assert stats.kstest(run.p, cdf).pvalue > 0.01


# -- single tracer engine -----------------------------------------------------

@given(profiles, seeds)
@settings(max_examples=40)
def test_energy_bookkeeping_closes(prof, seed):
    Q = wandering_transition_matrix(prof.n_links)
    run = simulate_tracer(prof, Q, 400.0, RngStream(seed))
    E = run.ledger.energy_exchanged
    gain = run.final_kinetic_energy - run.initial_kinetic_energy
    scale = max(1.0, np.abs(E).sum(), run.final_kinetic_energy + run.initial_kinetic_energy)
    assert abs(math.fsum(E) - gain) <= 1e-11 * scale * max(1, run.ledger.collision_counts.sum())


@given(profiles, seeds)
@settings(max_examples=40)
def test_scatterer_energy_tracks_current_difference(prof, seed):
    Q = wandering_transition_matrix(prof.n_links)
    run = simulate_tracer(prof, Q, 300.0, RngStream(seed))
    led = run.ledger
    J = np.concatenate(([0.0], led.link_current, [0.0]))
    diff = led.energy_exchanged - (J[1:] - J[:-1])
    # only the first (partial) and the last (unfinished) flights are unmatched
    bound = run.initial_kinetic_energy + run.final_kinetic_energy
    assert np.all(np.abs(diff) <= bound * (1 + 1e-12) + 1e-9)


@given(profiles, seeds)
@settings(max_examples=25)
def test_entropy_flow_is_weighted_energy(prof, seed):
    led = run_wandering(prof, 2, 200.0, RngStream(seed))
    assert led.entropy_flow == math.fsum(-prof.betas * led.energy_exchanged)


@given(st.integers(1, 6), seeds)
@settings(max_examples=25)
def test_wandering_periodicity_in_event_log(N, seed):
    prof = InverseTempProfile.constant(1.0, N)
    run = simulate_tracer(prof, wandering_transition_matrix(N), 100.0 * N, RngStream(seed), record=True)
    s = run.log.states
    assert s.size > 4 * N
    np.testing.assert_array_equal(s[2 * N:], s[:-2 * N])
    assert len(set(s[:2 * N].tolist())) == 2 * N


@given(profiles, seeds)
@settings(max_examples=25)
def test_replay_reproduces_samples_bitwise(prof, seed):
    ts = np.sort(RngStream(seed, 99).uniform(200)) * 150.0
    Q = wandering_transition_matrix(prof.n_links)
    run = simulate_tracer(prof, Q, 150.0, RngStream(seed), sample_times=ts, record=True)
    q, p = run.log.phase_at(ts)
    np.testing.assert_array_equal(q, run.sample_q)
    np.testing.assert_array_equal(p, run.sample_p)
    N = prof.n_links
    assert np.all((run.sample_q >= -1e-12) & (run.sample_q <= N + 1e-12))


def test_final_state_consistency():
    prof = InverseTempProfile.from_temperatures([1.0, 2.0, 3.0])
    run = simulate_tracer(prof, wandering_transition_matrix(2), 77.0, RngStream(3))
    f = run.final
    gap = f.next_event_time - f.time
    assert gap > 0
    assert (f.chain_state.scatterer - f.q) / f.p == pytest.approx(gap, rel=1e-9, abs=1e-9)


def test_boundary_visits_reflect():
    Q = TransitionMatrix.from_reflection(3, [0.4, 0.7])
    prof = InverseTempProfile.from_temperatures([1.0, 2.0, 1.5, 3.0])
    run = simulate_tracer(prof, Q, 2000.0, RngStream(4), record=True)
    E = Q.space
    at0 = E.positions[run.log.states] == 0
    atN = E.positions[run.log.states] == 3
    assert at0.any() and atN.any()
    assert np.all(run.log.states[at0] == E.index((0, 1)))
    assert np.all(run.log.outgoing[at0] > 0) and np.all(run.log.outgoing[atN] < 0)


def test_explicit_initial_condition_before_first_hit():
    prof = InverseTempProfile.constant(1.0, 2)
    ts = np.array([0.0, 0.25, 0.49])
    run = simulate_tracer(prof, wandering_transition_matrix(2), 5.0, RngStream(5), initial=(0.5, 1.0),
                          sample_times=ts)
    np.testing.assert_array_equal(run.sample_q, [0.5, 0.75, 0.99])
    with pytest.raises(DomainError):
        simulate_tracer(prof, wandering_transition_matrix(2), 5.0, RngStream(5), sample_times=[6.0])


def test_general_with_wandering_matrix_matches_wandering():
    prof = InverseTempProfile.from_temperatures([1.0, 1.7, 2.2, 3.0])
    a = run_wandering(prof, 3, 5000.0, RngStream(8))
    b = run_general(prof, wandering_transition_matrix(3), 5000.0, RngStream(8), n_tracers=3).ledger
    np.testing.assert_array_equal(a.link_current, b.link_current)
    np.testing.assert_array_equal(a.energy_exchanged, b.energy_exchanged)
    np.testing.assert_array_equal(a.collision_counts, b.collision_counts)


def test_runs_are_deterministic_and_thread_count_free():
    model = WanderingModel(InverseTempProfile.from_temperatures([1.0, 2.0, 3.0]), 2)
    a = run_replicas(model, 2000.0, 6, RngStream(9))
    b = run_replicas(model, 2000.0, 6, RngStream(9), workers=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.link_current, y.link_current)
    c = run_replicas(model, 2000.0, 6, RngStream(10))
    assert not np.array_equal(a[0].link_current, c[0].link_current)


def test_ledger_merge_rules():
    a = ObservableLedger.empty(np.array([1.0, 2.0]), 10.0)
    b = ObservableLedger.empty(np.array([1.0, 2.0]), 5.0)
    with pytest.raises(ValueError):
        a + b
    assert (a + a).t_elapsed == 10.0


# -- long-run averages --------------------------------------------------------

def test_wandering_equilibrium_has_no_mean_flow():
    prof = InverseTempProfile.constant(1.0, 3)
    s = summarize_replicas(run_replicas(WanderingModel(prof, 2), 2e4, 20, RngStream(30)))
    z = np.abs(s.mean["energy_exchanged"]) / s.stderr["energy_exchanged"]
    assert z.max() < 4
    assert abs(s.mean["entropy_flow"]) < 4 * s.stderr["entropy_flow"]


def test_confined_equilibrium_has_no_mean_current():
    prof = InverseTempProfile.constant(2.0, 3)
    s = summarize_replicas(run_replicas(ConfinedModel(prof), 2e4, 20, RngStream(31)))
    assert np.max(np.abs(s.mean["link_current"]) / s.stderr["link_current"]) < 4


def test_confined_two_links_selfconsistent_midpoint():
    prof = confined_profile(1.0, 4.0, 2).profile
    s = summarize_replicas(run_replicas(ConfinedModel(prof), 1e5, 16, RngStream(32)))
    rep = confined_stationary(prof)
    np.testing.assert_allclose(s.mean["link_current"], rep.currents, rtol=0.02)
    assert abs(s.mean["energy_exchanged"][1]) < 4 * s.stderr["energy_exchanged"][1]


def test_confined_cells_use_their_own_walls():
    prof = InverseTempProfile.from_temperatures([1.0, 3.0, 1.0])
    led = run_confined(prof, 2e4, RngStream(33))
    f = led.rates()["collision_frequency"]
    np.testing.assert_allclose(f, confined_stationary(prof).frequencies, rtol=0.05)


def test_general_nonequilibrium_invariant_measure():
    prof = InverseTempProfile.from_temperatures([1.0, 2.0, 1.5, 0.8])
    Q = TransitionMatrix.from_reflection(3, [0.3, 0.6])
    stat, dof, pval = general_chi2(prof, Q, seed=34, n_samples=20_000, spacing=25.0)
    assert pval > 0.01


def test_general_currents_match_density_flows():
    prof = InverseTempProfile.from_temperatures([2.0, 1.0, 1.5])
    Q = TransitionMatrix.from_reflection(2, 0.5)
    run = run_general(prof, Q, 1e5, RngStream(35), n_tracers=8)
    dens = invariant_density("general", prof, Q)
    c = dens.coefficients()
    # mean current on link n: flux of +p mass times T minus flux of -p mass times T
    T = prof.temperatures
    expected = c[:, 0] * T[:-1] - c[:, 1] * T[1:]
    np.testing.assert_allclose(run.ledger.rates()["link_current"] / 8, expected, rtol=0.05)


# -- empirical cumulant generating function -----------------------------------

EQ1 = WanderingModel(InverseTempProfile.constant(1.0, 1), 1)
PAIR = WanderingModel(InverseTempProfile(np.array([1.0, 2.0])), 1)


def test_empirical_cgf_domain_checks():
    with pytest.raises(DomainError):
        estimate_empirical_cgf(PAIR, 0, -1.0, 10.0, 100, RngStream(1))
    with pytest.raises(DomainError):
        estimate_empirical_cgf(PAIR, 0, 2.0, 10.0, 100, RngStream(1))
    with pytest.raises(InvalidSizeError):
        estimate_empirical_cgf(PAIR, 0, 0.1, 10.0, 99, RngStream(1))
    with pytest.raises(DomainError):
        estimate_empirical_cgf(PAIR, 1, 0.1, 10.0, 100, RngStream(1))


def test_empirical_cgf_at_zero_is_exactly_zero():
    est = estimate_empirical_cgf(PAIR, 0, 0.0, 20.0, 100, RngStream(2))
    assert est.value == 0.0 and est.stderr == 0.0


def test_empirical_cgf_equilibrium_quadratic():
    J = integrated_currents(EQ1, 0, 200.0, 4000, RngStream(3))
    target = 0.05 ** 2 / 2 * math.sqrt(2 / math.pi)
    for lam in (0.05, -0.05):
        est = estimate_empirical_cgf(EQ1, 0, lam, 200.0, 4000, None, currents=J)
        assert est.value == pytest.approx(target, rel=0.15)


def test_empirical_cgf_plateau_decays():
    vals = []
    for t in (25.0, 400.0):
        J = integrated_currents(PAIR, 0, t, 2000, RngStream(4))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeavyTailWarning)
            vals.append(estimate_empirical_cgf(PAIR, 0, 0.5, t, 2000, None, currents=J).value)
    assert abs(vals[1]) < abs(vals[0])
    assert abs(vals[1]) < 0.03


def test_heavy_tail_warning_and_jackknife():
    J = np.zeros(200)
    J[0] = -40.0
    with pytest.warns(HeavyTailWarning):
        est = estimate_empirical_cgf(PAIR, 0, 0.5, 10.0, 200, None, currents=J)
    assert est.max_weight_share > 0.1
    x = np.linspace(-1, 1, 150)
    est = estimate_empirical_cgf(PAIR, 0, 0.2, 5.0, 150, None, currents=x)
    y = -0.2 * x
    loo = np.array([np.log(np.mean(np.exp(np.delete(y, i)))) for i in range(y.size)])
    se = math.sqrt((y.size - 1) / y.size * np.sum((loo - loo.mean()) ** 2)) / 5.0
    assert est.stderr == pytest.approx(se, rel=1e-10)
    assert est.value == pytest.approx(np.log(np.mean(np.exp(y))) / 5.0, rel=1e-12)


def test_run_general_model_wrapper():
    prof = InverseTempProfile.constant(1.0, 2)
    model = GeneralModel(prof, TransitionMatrix.from_reflection(2, 0.5), n_tracers=2)
    led = run_replicas(model, 500.0, 2, RngStream(6))
    assert led[0].collision_counts.sum() > 0
