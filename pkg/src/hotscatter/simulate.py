"""Event-driven simulation of tracers moving among hot scatterers.

Every tracer is an independent Markov renewal process, so there is no global
event queue: each tracer is advanced from collision to collision on its own
random stream, in vectorised chunks of flights, and the per-tracer ledgers
are added at the end.  Positions are never integrated in time; between two
collisions the phase point is an affine function of time.
"""

from __future__ import annotations

import bisect
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analytic import PhaseDensity, invariant_density
from .exceptions import DomainError, InvalidSizeError
from .model import (
    BasicModel,
    ChainState,
    ConfinedModel,
    GeneralModel,
    InverseTempProfile,
    StateSpace,
    TransitionMatrix,
    WanderingModel,
    wandering_transition_matrix,
)
from .sampling import RngStream, emission_speed_from_uniform

MAX_CHUNK = 1 << 18
MIN_CHUNK = 16
DEFAULT_BURN_FRACTION = 0.01
HEAVY_TAIL_SHARE = 0.10

# sub-stream ids owned by one tracer
_FLIGHTS, _CHAIN, _INIT = 0, 1, 2


class HeavyTailWarning(UserWarning):
    """A single replica dominates an exponential average."""


class _Compensated:
    """Neumaier-compensated running sum of arrays."""

    def __init__(self, n):
        self.s = np.zeros(n)
        self.c = np.zeros(n)

    def add(self, x):
        t = self.s + x
        big = np.abs(self.s) >= np.abs(x)
        self.c += np.where(big, (self.s - t) + x, (x - t) + self.s)
        self.s = t

    @property
    def value(self):
        return self.s + self.c


@dataclass
class ObservableLedger:
    """Time-integrated observables accumulated over ``t_elapsed``.

    ``energy_exchanged[n]`` is the energy gained by the tracers at scatterer
    ``n``; ``link_current[n]`` the energy carried from ``n`` to ``n + 1``
    (credited when the flight lands).
    """

    betas: np.ndarray
    t_elapsed: float
    energy_exchanged: np.ndarray
    link_current: np.ndarray
    collision_counts: np.ndarray

    @classmethod
    def empty(cls, betas, t_elapsed):
        n = len(betas)
        return cls(np.asarray(betas, dtype=float), float(t_elapsed), np.zeros(n), np.zeros(n - 1),
                   np.zeros(n, dtype=np.int64))

    @property
    def entropy_flow(self) -> float:
        return -math.fsum(self.betas * self.energy_exchanged)

    def __add__(self, other: "ObservableLedger") -> "ObservableLedger":
        if self.t_elapsed != other.t_elapsed or not np.array_equal(self.betas, other.betas):
            raise ValueError("can only merge ledgers of one run (same window and profile)")
        return ObservableLedger(self.betas, self.t_elapsed,
                                self.energy_exchanged + other.energy_exchanged,
                                self.link_current + other.link_current,
                                self.collision_counts + other.collision_counts)

    def rates(self) -> dict:
        t = self.t_elapsed
        return {
            "link_current": self.link_current / t,
            "energy_exchanged": self.energy_exchanged / t,
            "collision_frequency": self.collision_counts / t,
            "entropy_flow": self.entropy_flow / t,
        }


@dataclass(frozen=True)
class TracerTrajectoryState:
    time: float
    q: float
    p: float
    chain_state: ChainState
    next_event_time: float


@dataclass
class EventLog:
    """Collision times, the state entered at each, and the velocity leaving it."""

    times: np.ndarray
    states: np.ndarray
    outgoing: np.ndarray
    positions: np.ndarray
    q0: float
    p0: float

    def phase_at(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        kk = np.maximum(k, 0)
        q = np.where(k >= 0, self.positions[self.states[kk]] + self.outgoing[kk] * (t - self.times[kk]),
                     self.q0 + self.p0 * t)
        p = np.where(k >= 0, self.outgoing[kk], self.p0)
        return q, p


@dataclass
class TracerRun:
    ledger: ObservableLedger
    final: TracerTrajectoryState
    initial_kinetic_energy: float
    sample_q: Optional[np.ndarray] = None
    sample_p: Optional[np.ndarray] = None
    log: Optional[EventLog] = None

    @property
    def final_kinetic_energy(self) -> float:
        return 0.5 * self.final.p ** 2


class _Walker:
    """Generates blocks of embedded-chain states."""

    def __init__(self, Q: TransitionMatrix, rng: RngStream):
        self.rng = rng
        if Q.is_deterministic():
            self.order = Q.cycle_order()
            self.where = np.empty_like(self.order)
            self.where[self.order] = np.arange(self.order.size)
            self.cum = None
        else:
            self.order = None
            cum = np.cumsum(Q.entries, axis=1)
            cum[:, -1] = 1.0
            self.cum = [row.tolist() for row in cum]

    def block(self, start: int, k: int) -> np.ndarray:
        if self.order is not None:
            L = self.order.size
            return self.order[(self.where[start] + np.arange(k + 1)) % L]
        u = self.rng.uniform(k).tolist()
        out = [start] * (k + 1)
        s = start
        cum = self.cum
        for i, ui in enumerate(u, 1):
            s = bisect.bisect_right(cum[s], ui)
            out[i] = s
        return np.asarray(out, dtype=np.int64)


def _chunk_size(remaining, mean_flight):
    k = int(remaining / mean_flight * 1.05) + MIN_CHUNK
    return max(MIN_CHUNK, min(k, MAX_CHUNK))


def sample_phase_point(density: PhaseDensity, rng: RngStream) -> tuple[float, float]:
    """Draw ``(q, p)`` from a piecewise Gaussian stationary density."""
    masses = np.array([t.mass for t in density.terms])
    u = rng.uniform(3)
    i = int(np.searchsorted(np.cumsum(masses) / masses.sum(), u[0], side="right"))
    i = min(i, len(masses) - 1)
    term = density.terms[i]
    q = term.left + (term.right - term.left) * u[1]
    # half-normal speed by inverting the Gaussian tail
    from scipy.special import ndtri
    speed = ndtri(0.5 + 0.5 * u[2]) / math.sqrt(term.beta)
    if speed == 0.0:
        speed = 1e-300
    return float(q), float(term.sign * speed)


def simulate_tracer(profile: InverseTempProfile, Q: TransitionMatrix, t_end: float, rng: RngStream, *,
                    t_burn: float = 0.0, initial: Optional[tuple[float, float]] = None,
                    sample_times: Optional[np.ndarray] = None, record: bool = False) -> TracerRun:
    """Advance one tracer over ``[0, t_end]`` and accumulate observables on ``[t_burn, t_end]``.

    ``initial`` is the phase point ``(q0, p0)``; by default it is drawn from
    the stationary density of the chain.
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    if not 0 <= t_burn < t_end:
        raise DomainError("t_burn must lie in [0, t_end)")
    if Q.n_links != profile.n_links:
        raise InvalidSizeError("transition matrix and profile disagree on N")
    space: StateSpace = Q.space
    betas = profile.betas
    pos = space.positions
    if initial is None:
        initial = sample_phase_point(invariant_density("general", profile, Q), rng.substream(_INIT))
    q0, p0 = map(float, initial)
    start, S0 = space.initial_state(q0, p0)
    st = space.index(start)

    N = profile.n_links
    E = _Compensated(N + 1)
    J = _Compensated(N)
    counts = np.zeros(N + 1, dtype=np.int64)
    flights = rng.substream(_FLIGHTS)
    walker = _Walker(Q, rng.substream(_CHAIN))
    mean_flight = float(np.mean(np.sqrt(np.pi * betas / 2.0)))

    if sample_times is not None:
        sample_times = np.asarray(sample_times, dtype=float)
        sq = np.empty_like(sample_times)
        sp = np.empty_like(sample_times)
        if np.any((sample_times < 0) | (sample_times > t_end)):
            raise DomainError("sample times must lie in [0, t_end]")
        pre = sample_times < S0
        sq[pre] = q0 + p0 * sample_times[pre]
        sp[pre] = p0
    logs = [] if record else None

    if S0 > t_end:
        final = TracerTrajectoryState(t_end, q0 + p0 * t_end, p0, start, S0)
    else:
        t_c, v_in = S0, p0
        while True:
            k = _chunk_size(t_end - t_c, mean_flight)
            states = walker.block(st, k)
            dep = pos[states[:-1]]
            arr = pos[states[1:]]
            d = arr - dep
            speed = emission_speed_from_uniform(flights.uniform(k), betas[dep])
            vel = d * speed
            S = t_c + np.cumsum(1.0 / speed)
            coll_t = np.concatenate(([t_c], S[:-1]))
            vin = np.concatenate(([v_in], vel[:-1]))

            m = (coll_t >= t_burn) & (coll_t <= t_end)
            if m.any():
                E.add(np.bincount(dep[m], weights=0.5 * (vel[m] ** 2 - vin[m] ** 2), minlength=N + 1))
                counts += np.bincount(dep[m], minlength=N + 1)
            m = (S >= t_burn) & (S <= t_end)
            if m.any():
                link = np.minimum(dep, arr)
                J.add(np.bincount(link[m], weights=0.5 * d[m] * speed[m] ** 2, minlength=N))

            if sample_times is not None:
                sel = (sample_times >= t_c) & (sample_times < S[-1])
                if sel.any():
                    ts = sample_times[sel]
                    i = np.searchsorted(S, ts, side="right")
                    sq[sel] = pos[states[i]] + vel[i] * (ts - coll_t[i])
                    sp[sel] = vel[i]
            if record:
                keep = coll_t <= t_end
                logs.append((coll_t[keep], states[:-1][keep], vel[keep]))

            if S[-1] > t_end:
                i = int(np.searchsorted(S, t_end, side="right"))
                q_end = pos[states[i]] + vel[i] * (t_end - coll_t[i])
                final = TracerTrajectoryState(t_end, float(q_end), float(vel[i]),
                                              space.states[states[i + 1]], float(S[i]))
                break
            t_c, st, v_in = S[-1], int(states[-1]), vel[-1]

    ledger = ObservableLedger(betas, t_end - t_burn, E.value, J.value, counts)
    run = TracerRun(ledger, final, 0.5 * p0 * p0)
    if sample_times is not None:
        run.sample_q, run.sample_p = sq, sp
    if record:
        if logs:
            times, sts, outs = (np.concatenate(x) for x in zip(*logs))
        else:
            times, sts, outs = np.empty(0), np.empty(0, np.int64), np.empty(0)
        run.log = EventLog(times, sts, outs, pos, q0, p0)
    return run


def _burn(t_end, t_burn):
    return DEFAULT_BURN_FRACTION * t_end if t_burn is None else t_burn


def _merge(ledgers):
    total = ledgers[0]
    for led in ledgers[1:]:
        total = total + led
    return total


def run_wandering(profile: InverseTempProfile, n_tracers: int, t_end: float, rng: RngStream, *,
                  t_burn: Optional[float] = None, initial=None) -> ObservableLedger:
    """Ledger summed over ``n_tracers`` independent wandering tracers."""
    if int(n_tracers) != n_tracers or n_tracers < 1:
        raise InvalidSizeError("n_tracers must be a positive integer")
    Q = wandering_transition_matrix(profile.n_links)
    t_burn = _burn(t_end, t_burn)
    runs = [simulate_tracer(profile, Q, t_end, rng.substream(i), t_burn=t_burn,
                            initial=None if initial is None else initial[i])
            for i in range(n_tracers)]
    return _merge([r.ledger for r in runs])


def run_confined(profile: InverseTempProfile, t_end: float, rng: RngStream, *,
                 t_burn: Optional[float] = None, initial=None) -> ObservableLedger:
    """One tracer per cell ``[n, n+1]``, reflected by scatterers ``n`` and ``n + 1``."""
    t_burn = _burn(t_end, t_burn)
    N = profile.n_links
    Q1 = wandering_transition_matrix(1)
    total = ObservableLedger.empty(profile.betas, t_end - t_burn)
    for n in range(N):
        cell = InverseTempProfile(profile.betas[n:n + 2].copy())
        init = None
        if initial is not None:
            q, p = initial[n]
            init = (q - n, p)
        run = simulate_tracer(cell, Q1, t_end, rng.substream(n), t_burn=t_burn, initial=init)
        total.energy_exchanged[n:n + 2] += run.ledger.energy_exchanged
        total.link_current[n] += run.ledger.link_current[0]
        total.collision_counts[n:n + 2] += run.ledger.collision_counts
    return total


@dataclass
class GeneralRun:
    ledger: ObservableLedger
    sample_times: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def histogram(self, speed_edges) -> np.ndarray:
        return phase_histogram(self.q.ravel(), self.p.ravel(), self.ledger.betas.size - 1, speed_edges)


def phase_histogram(q, p, n_links, speed_edges) -> np.ndarray:
    """Counts indexed by (cell, sign, speed bin); sign index 0 is p > 0."""
    q = np.asarray(q)
    p = np.asarray(p)
    cell = np.clip(np.floor(q).astype(np.int64), 0, n_links - 1)
    sgn = (p < 0).astype(np.int64)
    b = np.searchsorted(speed_edges, np.abs(p), side="right") - 1
    nb = len(speed_edges) - 1
    ok = (b >= 0) & (b < nb)
    flat = (cell[ok] * 2 + sgn[ok]) * nb + b[ok]
    return np.bincount(flat, minlength=n_links * 2 * nb).reshape(n_links, 2, nb)


def run_general(profile: InverseTempProfile, Q: TransitionMatrix, t_end: float, rng: RngStream, *,
                t_burn: Optional[float] = None, n_tracers: int = 1, sample_times=None,
                initial=None) -> GeneralRun:
    """Tracers driven by an arbitrary admissible chain, with optional phase samples."""
    t_burn = _burn(t_end, t_burn)
    if sample_times is None:
        sample_times = np.empty(0)
    sample_times = np.asarray(sample_times, dtype=float)
    runs = [simulate_tracer(profile, Q, t_end, rng.substream(i), t_burn=t_burn,
                            initial=None if initial is None else initial[i], sample_times=sample_times)
            for i in range(n_tracers)]
    q = np.stack([r.sample_q for r in runs])
    p = np.stack([r.sample_p for r in runs])
    return GeneralRun(_merge([r.ledger for r in runs]), sample_times, q, p)


# -- basic renewal process ----------------------------------------------------

@dataclass(frozen=True)
class AgeResidualSample:
    """Time since the last hit and time to the next one (scalars or arrays)."""

    age: np.ndarray
    residual: np.ndarray

    @property
    def span(self):
        return self.age + self.residual

    @property
    def q(self):
        return self.age / self.span

    @property
    def p(self):
        return 1.0 / self.span


@dataclass
class BasicRun:
    sample_times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    age: np.ndarray
    residual: np.ndarray
    n_collisions: int
    t_end: float

    @property
    def age_residual(self) -> AgeResidualSample:
        return AgeResidualSample(self.age, self.residual)


def run_basic(beta: float, q0: float, p0: float, t_end: float, rng: RngStream,
              sample_times=None) -> BasicRun:
    """Particle on [0, 1): absorbed at 1 and re-emitted at 0 with a fresh speed.

    Returns phase points and the age/residual pair at ``sample_times`` and the
    number of hits of the wall at 1 up to ``t_end``.
    """
    BasicModel(beta)
    if not (0.0 <= q0 < 1.0) or not (p0 > 0 and np.isfinite(p0)):
        raise DomainError(f"need q0 in [0, 1) and p0 > 0, got ({q0}, {p0})")
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    ts = np.empty(0) if sample_times is None else np.asarray(sample_times, dtype=float)
    S0 = (1.0 - q0) / p0
    A0 = q0 / p0
    mean_flight = math.sqrt(math.pi * beta / 2.0)
    flights = rng.substream(_FLIGHTS)
    hits = [np.array([S0])]
    taus = [np.empty(0)]
    last = S0
    while last <= t_end:
        k = _chunk_size(t_end - last, mean_flight)
        tau = 1.0 / emission_speed_from_uniform(flights.uniform(k), beta)
        S = last + np.cumsum(tau)
        hits.append(S)
        taus.append(tau)
        last = S[-1]
    S = np.concatenate(hits)        # S_0, S_1, ...
    tau = np.concatenate(taus)      # tau_1, tau_2, ...
    n_coll = int(np.searchsorted(S, t_end, side="right"))

    j = np.searchsorted(S, ts, side="right")   # number of hits <= t
    before = j == 0
    jj = np.maximum(j - 1, 0)
    span = np.where(before, 1.0 / p0, tau[np.minimum(jj, tau.size - 1)])
    age = np.where(before, A0 + ts, ts - S[jj])
    residual = np.where(before, S0 - ts, S[np.minimum(j, S.size - 1)] - ts)
    q = np.where(before, q0 + p0 * ts, age / span)
    p = 1.0 / span
    return BasicRun(ts, q, p, age, residual, n_coll, t_end)


# -- replicas and cumulant estimation -----------------------------------------

def run_model(model, t_end: float, rng: RngStream, *, t_burn: Optional[float] = None) -> ObservableLedger:
    if isinstance(model, WanderingModel):
        return run_wandering(model.profile, model.n_tracers, t_end, rng, t_burn=t_burn)
    if isinstance(model, ConfinedModel):
        return run_confined(model.profile, t_end, rng, t_burn=t_burn)
    if isinstance(model, GeneralModel):
        return run_general(model.profile, model.matrix, t_end, rng, t_burn=t_burn,
                           n_tracers=model.n_tracers).ledger
    raise TypeError(f"cannot build a ledger for {type(model).__name__}")


def run_replicas(model, t_end: float, n_replicas: int, rng: RngStream, *,
                 t_burn: Optional[float] = None, workers: int = 1) -> list[ObservableLedger]:
    """Independent replicas on sub-streams ``0..n_replicas-1``, returned in order.

    ``workers > 1`` runs them on a thread pool; the result does not depend on it.
    """
    if n_replicas < 1:
        raise InvalidSizeError("n_replicas must be >= 1")
    job = lambda r: run_model(model, t_end, rng.substream(r), t_burn=t_burn)
    if workers <= 1:
        return [job(r) for r in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(n_replicas)))


@dataclass
class ReplicaSummary:
    """Replica means of the per-unit-time observables and their standard errors."""

    n_replicas: int
    mean: dict
    stderr: dict


def summarize_replicas(ledgers: Sequence[ObservableLedger]) -> ReplicaSummary:
    rates = [led.rates() for led in ledgers]
    R = len(rates)
    mean, se = {}, {}
    for key in rates[0]:
        x = np.array([r[key] for r in rates], dtype=float)
        mean[key] = x.mean(axis=0)
        se[key] = x.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full_like(mean[key], np.nan)
    return ReplicaSummary(R, mean, se)


def integrated_currents(model, link: int, t: float, n_replicas: int, rng: RngStream) -> np.ndarray:
    """``J_link([0, t])`` for independent stationary replicas."""
    return np.array([run_model(model, t, rng.substream(r), t_burn=0.0).link_current[link]
                     for r in range(n_replicas)])


@dataclass(frozen=True)
class CgfEstimate:
    value: float
    stderr: float
    max_weight_share: float
    n_replicas: int
    horizon: float


def _profile_of(model) -> InverseTempProfile:
    return model.profile


def estimate_empirical_cgf(model, link: int, lam: float, t: float, n_replicas: int, rng: RngStream,
                           currents: Optional[np.ndarray] = None) -> CgfEstimate:
    """Finite-time estimate ``(1/t) log mean_r exp(-lam J_r)`` with a jackknife error.

    Biased at finite ``t`` (and by Jensen's inequality for finite replica
    counts); the largest single-replica share of the exponential mean is
    reported and a :class:`HeavyTailWarning` is emitted above 10%.
    ``currents`` may supply precomputed ``J_link([0, t])`` samples.
    """
    betas = _profile_of(model).betas
    if not 0 <= link < betas.size - 1:
        raise DomainError(f"link {link} out of range")
    if not (-betas[link] < lam < betas[link + 1]):
        raise DomainError(f"lambda={lam} outside ({-betas[link]}, {betas[link + 1]})")
    if n_replicas < 100:
        raise InvalidSizeError("need at least 100 replicas")
    if currents is None:
        currents = integrated_currents(model, link, t, n_replicas, rng)
    x = -lam * np.asarray(currents, dtype=float)
    R = x.size
    if lam == 0.0:
        return CgfEstimate(0.0, 0.0, 1.0 / R, R, t)
    xmax = x.max()
    w = np.exp(x - xmax)
    total = math.fsum(w)
    value = (xmax + math.log(total / R)) / t
    loo = xmax + np.log(np.maximum(total - w, np.finfo(float).tiny) / (R - 1))
    stderr = math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2)) / t
    share = float(w.max() / total)
    if share > HEAVY_TAIL_SHARE:
        warnings.warn(f"one replica carries {share:.1%} of the exponential mean; error bar unreliable",
                      HeavyTailWarning, stacklevel=2)
    return CgfEstimate(value, stderr, share, R, t)
