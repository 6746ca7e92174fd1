"""Seeded random streams and exact samplers for the emission and flight laws.

A scatterer at inverse temperature ``beta`` emits speeds with the Rayleigh
density ``beta * v * exp(-beta v^2 / 2)``; the flight across a unit cell then
lasts ``tau = 1 / v``, with density ``beta / tau^3 * exp(-beta / (2 tau^2))``.
Both are drawn by inverting the speed CDF, one uniform per sample.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .exceptions import DomainError

_MAX_SEED = 2**64


def _as_key(stream_id) -> tuple[int, ...]:
    if isinstance(stream_id, (int, np.integer)):
        ids = (int(stream_id),)
    else:
        ids = tuple(int(i) for i in stream_id)
    for i in ids:
        if not 0 <= i < _MAX_SEED:
            raise ValueError(f"stream ids must be unsigned 64-bit integers, got {i}")
    return ids


class RngStream:
    """A reproducible, splittable source of uniforms.

    The stream is keyed by ``(seed, stream_id)`` through numpy's
    ``SeedSequence`` spawn keys, so distinct ids give independent PCG64
    generators and equal ids replay the same sequence bit for bit.  A
    stream is meant to have a single owner.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id=0):
        seed = int(seed)
        if not 0 <= seed < _MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream_id = _as_key(stream_id)
        self._gen: Optional[np.random.Generator] = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def substream(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + _as_key(ids))

    def uniform(self, size=None):
        """Uniforms on the open interval (0, 1); exact zeros are redrawn."""
        gen = self.generator
        if size is None:
            u = gen.random()
            while u == 0.0:
                u = gen.random()
            return u
        u = gen.random(size)
        zeros = u == 0.0
        while zeros.any():
            u[zeros] = gen.random(int(zeros.sum()))
            zeros = u == 0.0
        return u

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _check_beta(beta):
    b = np.asarray(beta, dtype=float)
    if np.any(~np.isfinite(b)) or np.any(b <= 0):
        raise DomainError(f"beta must be positive and finite, got {beta}")
    return b


def emission_speed_from_uniform(u, beta):
    """Inverse Rayleigh CDF: ``v = sqrt(-2 log(1 - u) / beta)``."""
    b = _check_beta(beta)
    v = np.sqrt(-2.0 * np.log1p(-np.asarray(u, dtype=float)) / b)
    return float(v) if np.ndim(v) == 0 else v


def sample_emission_speed(beta, rng: RngStream, size=None):
    _check_beta(beta)
    return emission_speed_from_uniform(rng.uniform(size), beta)


def sample_interarrival(beta, rng: RngStream, size=None):
    """Flight time across one cell, ``1 / v`` for the same uniform as the speed."""
    return 1.0 / sample_emission_speed(beta, rng, size)


def emission_speed_cdf(v, beta):
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, -np.expm1(-beta * v * v / 2.0), 0.0)


def interarrival_cdf(tau, beta):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(tau > 0, np.exp(-beta / (2.0 * tau * tau)), 0.0)


def interarrival_mean(beta):
    """Mean flight time ``sqrt(pi beta / 2)``."""
    return np.sqrt(np.pi * np.asarray(beta, dtype=float) / 2.0)
