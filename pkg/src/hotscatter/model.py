"""State spaces, temperature profiles and embedded chains of the tracer models.

A tracer lives on ``[0, N]`` with scatterers at the integers ``0..N``.  The
embedded chain records which scatterer the tracer has just hit together with a
sign.  For an interior scatterer the sign is the direction the tracer was
moving when it arrived; the two boundary states ``(0, +1)`` and ``(N, -1)``
carry the sign after the (forced) reflection.  States are enumerated as::

    (0,+1), (1,+1), ..., (N-1,+1), (N,-1), (N-1,-1), ..., (1,-1)

so that the wandering chain is the unit cyclic shift of that list.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from .exceptions import (
    DomainError,
    InvalidSizeError,
    InvalidTransitionMatrixError,
    ReducibleChainError,
)

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-12
DENSE_LIMIT = 64


@dataclass(frozen=True, eq=False)
class InverseTempProfile:
    """Inverse temperatures ``beta_0..beta_N`` of the scatterers."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=float).ravel()
        if betas.size < 2:
            raise InvalidSizeError("a profile needs at least two scatterers (one link)")
        if not np.all(np.isfinite(betas)) or np.any(betas <= 0):
            raise DomainError(f"inverse temperatures must be positive and finite, got {betas}")
        betas.setflags(write=False)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def from_temperatures(cls, temperatures: Sequence[float]) -> "InverseTempProfile":
        temps = np.asarray(temperatures, dtype=float)
        if np.any(~np.isfinite(temps)) or np.any(temps <= 0):
            raise DomainError(f"temperatures must be positive and finite, got {temps}")
        return cls(1.0 / temps)

    @classmethod
    def constant(cls, beta: float, n_links: int) -> "InverseTempProfile":
        if n_links < 1:
            raise InvalidSizeError("n_links must be >= 1")
        return cls(np.full(n_links + 1, float(beta)))

    @property
    def n_links(self) -> int:
        return self.betas.size - 1

    @property
    def temperatures(self) -> np.ndarray:
        return 1.0 / self.betas

    def reversed(self) -> "InverseTempProfile":
        return InverseTempProfile(self.betas[::-1].copy())

    def is_equilibrium(self) -> bool:
        return bool(np.all(self.betas == self.betas[0]))

    def __len__(self):
        return self.betas.size

    def __eq__(self, other):
        if not isinstance(other, InverseTempProfile):
            return NotImplemented
        return np.array_equal(self.betas, other.betas)

    def __hash__(self):
        return hash(self.betas.tobytes())

    def __repr__(self):
        return f"InverseTempProfile(betas={self.betas.tolist()})"


class ChainState(NamedTuple):
    scatterer: int
    sign: int


@dataclass(frozen=True)
class StateSpace:
    """The finite set E of (scatterer, sign) pairs for a system of N links."""

    n_links: int

    def __post_init__(self):
        if int(self.n_links) != self.n_links or self.n_links < 1:
            raise InvalidSizeError(f"number of links must be a positive integer, got {self.n_links}")

    @cached_property
    def states(self) -> tuple[ChainState, ...]:
        N = self.n_links
        right = [ChainState(n, +1) for n in range(N)]
        left = [ChainState(n, -1) for n in range(N, 0, -1)]
        return tuple(right + left)

    def __len__(self):
        return 2 * self.n_links

    def __iter__(self):
        return iter(self.states)

    def __contains__(self, state) -> bool:
        n, s = state
        N = self.n_links
        if s == +1:
            return 0 <= n <= N - 1
        if s == -1:
            return 1 <= n <= N
        return False

    def index(self, state) -> int:
        n, s = state
        if (n, s) not in self:
            raise DomainError(f"{(n, s)} is not a state of E for N={self.n_links}")
        return n if s == +1 else 2 * self.n_links - n

    @cached_property
    def positions(self) -> np.ndarray:
        """Scatterer index of every state."""
        pos = np.array([st.scatterer for st in self.states], dtype=np.int64)
        pos.setflags(write=False)
        return pos

    @cached_property
    def arrival_directions(self) -> np.ndarray:
        """Direction of motion just before the tracer reached each state."""
        N = self.n_links
        out = np.array([st.sign for st in self.states], dtype=np.int64)
        out[self.index((0, +1))] = -1
        out[self.index((N, -1))] = +1
        out.setflags(write=False)
        return out

    def arrival_state(self, scatterer: int, direction: int) -> int:
        """Index of the state entered when reaching ``scatterer`` moving in ``direction``."""
        N = self.n_links
        if scatterer == 0:
            if direction != -1:
                raise DomainError("scatterer 0 can only be reached from the right")
            return self.index((0, +1))
        if scatterer == N:
            if direction != +1:
                raise DomainError(f"scatterer {N} can only be reached from the left")
            return self.index((N, -1))
        return self.index((scatterer, direction))

    def initial_state(self, q0: float, p0: float) -> tuple[ChainState, float]:
        """First state hit from phase point ``(q0, p0)`` and the time to hit it."""
        N = self.n_links
        if p0 == 0 or not np.isfinite(p0):
            raise DomainError("initial velocity must be a non-zero finite number")
        if not (0.0 <= q0 <= N):
            raise DomainError(f"initial position {q0} outside [0, {N}]")
        sign = 1 if p0 > 0 else -1
        n0 = int(np.floor(q0 + (sign + 1) / 2))
        if n0 > N or n0 < 0:
            raise DomainError(f"phase point ({q0}, {p0}) leaves the system")
        sigma0 = sign if 0 < n0 < N else -sign
        return ChainState(n0, sigma0), (n0 - q0) / p0


def _support_reachable(entries: np.ndarray, start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(entries[i] > 0):
            j = int(j)
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def is_irreducible(entries: np.ndarray) -> bool:
    """Reachability closure of the support graph, forwards and backwards from state 0."""
    n = entries.shape[0]
    return (len(_support_reachable(entries, 0)) == n
            and len(_support_reachable(entries.T, 0)) == n)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix on E obeying the motion rules of the tracer.

    From a state at scatterer ``n`` the tracer leaves to ``n - 1`` or ``n + 1``
    and mass may only go to the state it enters there, i.e. ``(n', s')`` with
    ``n' - n`` equal to the arrival direction of ``(n', s')``.  Boundary rows
    are therefore deterministic (reflection).
    """

    entries: np.ndarray
    space: StateSpace = field(init=False)

    def __post_init__(self):
        Q = np.array(self.entries, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] % 2 or Q.shape[0] < 2:
            raise InvalidTransitionMatrixError(f"expected a square matrix of even size, got shape {Q.shape}")
        if np.any(~np.isfinite(Q)) or np.any(Q < 0):
            raise InvalidTransitionMatrixError("entries must be finite and non-negative")
        rows = Q.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            raise InvalidTransitionMatrixError(f"rows must sum to 1, got {rows}")
        space = StateSpace(Q.shape[0] // 2)
        allowed = _allowed_support(space)
        bad = (Q > 0) & ~allowed
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise InvalidTransitionMatrixError(
                f"transition {space.states[i]} -> {space.states[j]} is not a single flight to a neighbour"
            )
        if not is_irreducible(Q):
            raise ReducibleChainError("transition matrix is not irreducible")
        Q.setflags(write=False)
        object.__setattr__(self, "entries", Q)
        object.__setattr__(self, "space", space)

    @property
    def n_links(self) -> int:
        return self.space.n_links

    def __getitem__(self, key):
        return self.entries[key]

    def prob(self, src, dst) -> float:
        return float(self.entries[self.space.index(src), self.space.index(dst)])

    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.entries.max(axis=1), 1.0, rtol=0, atol=ROW_SUM_TOL)))

    def successor(self) -> np.ndarray:
        """Successor index of every state; only meaningful for deterministic chains."""
        return np.argmax(self.entries, axis=1)

    def cycle_order(self) -> np.ndarray:
        """State indices in visiting order, starting from state 0 (deterministic chains)."""
        if not self.is_deterministic():
            raise ValueError("cycle_order requires a deterministic chain")
        succ = self.successor()
        order = [0]
        while True:
            nxt = int(succ[order[-1]])
            if nxt == 0:
                break
            order.append(nxt)
        return np.array(order, dtype=np.int64)

    @classmethod
    def from_reflection(cls, n_links: int, reflect: Sequence[float] | float) -> "TransitionMatrix":
        """Chain where interior scatterer ``n`` reflects with probability ``reflect[n-1]``.

        ``reflect`` may be a scalar (same for every interior scatterer) or a
        sequence of length ``N - 1``; zero everywhere gives the wandering chain.
        """
        space = StateSpace(n_links)
        N = n_links
        r = np.broadcast_to(np.asarray(reflect, dtype=float), (max(N - 1, 0),))
        if np.any((r < 0) | (r > 1)):
            raise DomainError("reflection probabilities must lie in [0, 1]")
        Q = np.zeros((2 * N, 2 * N))
        for i, (n, s) in enumerate(space.states):
            d = space.arrival_directions[i]
            if n == 0 or n == N:
                Q[i, space.arrival_state(n + s, s)] = 1.0
                continue
            rho = r[n - 1]
            Q[i, space.arrival_state(n + d, d)] += 1.0 - rho
            Q[i, space.arrival_state(n - d, -d)] += rho
        return cls(Q)


def _allowed_support(space: StateSpace) -> np.ndarray:
    pos = space.positions
    arr = space.arrival_directions
    step = pos[None, :] - pos[:, None]
    return step == arr[None, :]


def wandering_transition_matrix(n_links: int) -> TransitionMatrix:
    """Deterministic chain: transmitted at interior scatterers, reflected at 0 and N."""
    if int(n_links) != n_links or n_links < 1:
        raise InvalidSizeError(f"N must be a positive integer, got {n_links}")
    size = 2 * n_links
    Q = np.zeros((size, size))
    Q[np.arange(size), (np.arange(size) + 1) % size] = 1.0
    return TransitionMatrix(Q)


def wandering_state_at(state0, k: int, n_links: int) -> ChainState:
    """Closed-form state of the wandering chain after ``k`` steps from ``state0``.

    The tracer moves at unit speed on a circle of length 2N; unfolding the
    reflections gives ``n_k = f(|n_0 + s_0 k| mod 2N)`` with ``f(i) = N - |N - i|``.
    """
    N = n_links
    n0, s0 = state0
    if (n0, s0) not in StateSpace(N):
        raise DomainError(f"{state0} is not a state of E for N={N}")
    n_k = N - abs(N - (abs(n0 + s0 * k) % (2 * N)))
    unfolded = (n0 if s0 == 1 else 2 * N - n0) + k
    s_k = 1 if unfolded % (2 * N) < N else -1
    return ChainState(int(n_k), s_k)


def chain_stationary_distribution(Q: Union[TransitionMatrix, np.ndarray]) -> np.ndarray:
    """Invariant probability vector of an irreducible chain."""
    P = Q.entries if isinstance(Q, TransitionMatrix) else np.asarray(Q, dtype=float)
    if not is_irreducible(P):
        raise ReducibleChainError("stationary distribution requires an irreducible chain")
    n = P.shape[0]
    if n <= DENSE_LIMIT:
        w, v = np.linalg.eig(P.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        nu = np.real(v[:, k])
        nu = nu / nu.sum()
        nu = np.clip(nu, 0.0, None)
        nu /= nu.sum()
    else:
        # lazy chain: same invariant law, aperiodic
        lazy = 0.5 * (P + np.eye(n))
        nu = np.full(n, 1.0 / n)
        for _ in range(1_000_000):
            nxt = nu @ lazy
            if np.max(np.abs(nxt - nu)) < 1e-15:
                nu = nxt
                break
            nu = nxt
        nu /= nu.sum()
    residual = np.max(np.abs(nu @ P - nu))
    if residual > STATIONARY_TOL:
        # one Newton-like polish through the linear system
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        nu = np.linalg.solve(A, b)
    return nu


# -- model descriptions ------------------------------------------------------

@dataclass(frozen=True)
class BasicModel:
    """One particle on [0, 1) re-emitted at 0 with a fresh speed at each hit of 1."""

    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise DomainError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class GeneralModel:
    profile: InverseTempProfile
    matrix: TransitionMatrix
    n_tracers: int = 1

    def __post_init__(self):
        if self.matrix.n_links != self.profile.n_links:
            raise InvalidSizeError(
                f"matrix is for N={self.matrix.n_links} but profile has N={self.profile.n_links}"
            )
        if self.n_tracers < 1:
            raise InvalidSizeError("n_tracers must be >= 1")


@dataclass(frozen=True)
class WanderingModel:
    profile: InverseTempProfile
    n_tracers: int = 1

    def __post_init__(self):
        if int(self.n_tracers) != self.n_tracers or self.n_tracers < 1:
            raise InvalidSizeError("n_tracers must be a positive integer")

    @property
    def matrix(self) -> TransitionMatrix:
        return wandering_transition_matrix(self.profile.n_links)


@dataclass(frozen=True)
class ConfinedModel:
    """Exactly one tracer per cell, reflected by both of its scatterers."""

    profile: InverseTempProfile

    @property
    def n_tracers(self) -> int:
        return self.profile.n_links


ModelKind = Union[BasicModel, GeneralModel, WanderingModel, ConfinedModel]
