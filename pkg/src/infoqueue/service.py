"""Service models: what one slot of a schedule delivers to each message."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from ._validation import ConfigError, check_rho
from .channel import DegradedBroadcastSpec, DiscreteMac, GaussianMacSpec
from .codelen import min_codeword_length_dbc, min_codeword_length_mac, service_requirement
from .exponents import e0_gaussian_quantum, e0_independent
from .sched import enumerate_schedules

INDEPENDENT = "independent"
JOINT = "joint"
DBC = "dbc"
MODES = (INDEPENDENT, JOINT, DBC)


@dataclass(frozen=True)
class QuantumService:
    """Independent decoding: residual requirements shrink by ``phi_j(s)`` per slot.

    Attributes
    ----------
    requirements : tuple of float
        Service requirement ``S_j`` of a fresh class-``j`` message.
    quanta : dict
        ``schedule -> tuple`` of per-class quanta (0 where ``s_j = 0``) for
        every schedule with at most ``K`` messages.
    K : int
    """

    requirements: tuple
    quanta: dict
    K: int

    mode = INDEPENDENT

    @property
    def n_classes(self):
        return len(self.requirements)

    def phi(self, s):
        return self.quanta[tuple(s)]


@dataclass(frozen=True)
class BlockService:
    """Joint or successive decoding: a cohort of ``s`` needs ``N(s)`` slots."""

    lengths: dict
    n_classes: int
    K: int
    mode: str = JOINT

    def length(self, s):
        return self.lengths[tuple(s)]


class GaussianQuanta(Mapping):
    """Lazily evaluated ``phi_j(s)`` for every ``s`` with at most ``K`` messages.

    Large ``K`` makes the schedule space huge, so quanta are computed on
    first access and cached.
    """

    def __init__(self, spec, K, rho):
        self.spec, self.K, self.rho = spec, K, rho
        self._cache = {}

    def __getitem__(self, s):
        s = tuple(s)
        out = self._cache.get(s)
        if out is None:
            if s not in self:
                raise KeyError(s)
            out = tuple(e0_gaussian_quantum(self.spec, s, j, self.rho) if s[j] else 0.0 for j in range(len(s)))
            self._cache[s] = out
        return out

    def __contains__(self, s):
        return (
            len(s) == self.spec.n_classes
            and all(isinstance(a, (int, np.integer)) and a >= 0 for a in s)
            and sum(s) <= self.K
        )

    def __iter__(self):
        return iter(enumerate_schedules(self.spec.n_classes, self.K))

    def __len__(self):
        return math.comb(self.spec.n_classes + self.K, self.K)

    def __reduce__(self):
        return (GaussianQuanta, (self.spec, self.K, self.rho))


def gaussian_quanta(spec, K, rho):
    """``phi_j(s)`` for every ``s`` with at most ``K`` messages on a Gaussian MAC."""
    return GaussianQuanta(spec, K, check_rho(rho))


def discrete_quanta(mac, q, K, rho):
    """``phi_j(s)`` for every schedule the transmitter slots of ``mac`` can carry."""
    J = mac.n_classes
    caps = [mac.input_classes.count(c) for c in range(J)]
    out = {}
    for s in enumerate_schedules(J, K):
        if any(a > c for a, c in zip(s, caps)):
            continue
        out[s] = tuple(e0_independent(mac, q, s, j, rho) if s[j] else 0.0 for j in range(J))
    return out


def independent_service(channel, classes, K, rho, q=None):
    """Build the independent-decoding service model."""
    rho = check_rho(rho)
    if isinstance(channel, GaussianMacSpec):
        quanta = gaussian_quanta(channel, K, rho)
    elif isinstance(channel, DiscreteMac):
        if q is None:
            raise ConfigError("discrete MAC needs an input distribution")
        quanta = discrete_quanta(channel, q, K, rho)
    else:
        raise ConfigError("independent decoding needs a gaussian_mac or discrete_mac channel")
    if channel.n_classes != len(classes):
        raise ConfigError("channel and classes disagree on the number of classes")
    reqs = tuple(service_requirement(c, rho) for c in classes)
    return QuantumService(reqs, quanta, K)


def block_service(mode, channel, classes, schedules, K, rho, q=None, null_messages=False):
    """Codeword lengths ``N(s)`` for the given non-empty schedules."""
    rho = check_rho(rho)
    lengths = {}
    for s in schedules:
        s = tuple(s)
        if not any(s):
            continue
        if mode == JOINT:
            if not isinstance(channel, DiscreteMac):
                raise ConfigError("joint decoding needs a discrete_mac channel")
            lengths[s] = min_codeword_length_mac(channel, q, classes, s, rho).n
        elif mode == DBC:
            if not isinstance(channel, DegradedBroadcastSpec):
                raise ConfigError("dbc mode needs a dbc channel")
            lengths[s] = min_codeword_length_dbc(channel, classes, s, rho, null_messages).n
        else:
            raise ConfigError(f"mode {mode!r} has no block codewords")
    return BlockService(lengths, len(classes), K, mode)
