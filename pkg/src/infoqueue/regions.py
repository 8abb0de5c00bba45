"""Stability thresholds, rate regions and their capacity interpretations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator

from ._validation import ConfigError, InfeasibleError, check_rates, check_rho
from .codelen import ceil_multiple_count, ceil_to_multiple, service_requirement
from .qsim import proportional_splitting
from .sched import STATE_INDEPENDENT, SUBCLASS, PolicySpec, enumerate_schedules
from .service import (
    DBC,
    INDEPENDENT,
    JOINT,
    BlockService,
    GaussianQuanta,
    QuantumService,
    block_service,
    independent_service,
)

STRICT_MARGIN = 1e-9


# ---------------------------------------------------------------- rate vectors


def rate_vector(service, s):
    """Messages per slot each class receives under a fixed schedule ``s``.

    ``s_j phi_j(s) / S_j`` for independent decoding and ``s_j / N(s)`` for
    block codes.
    """
    s = tuple(s)
    if not any(s):
        return np.zeros(len(s))
    if isinstance(service, QuantumService):
        phi = service.phi(s)
        return np.array([a * f / S for a, f, S in zip(s, phi, service.requirements)])
    return np.array(s, dtype=float) / service.length(s)


def rate_generators(service, schedules=None):
    """``{s: r(s)}`` over the given schedules (default: all with known service)."""
    if schedules is None:
        schedules = service.quanta.keys() if isinstance(service, QuantumService) else service.lengths.keys()
    return {tuple(s): rate_vector(service, s) for s in schedules}


def nat_rates(rates, classes):
    """Nat arrival rates ``ln(M_j) E A_j``."""
    return np.asarray(rates, dtype=float) * np.array([c.log_alphabet for c in classes])


# ---------------------------------------------------------------- non-idling


def _full_quanta(service):
    J, K = service.n_classes, service.K
    fulls = enumerate_schedules(J, K, full=True)
    phi = np.array([service.phi(s) for s in fulls])
    return np.array(fulls), phi


def largest_quanta(service, scope="full"):
    """``max_s phi_j(s)`` over full schedules (``scope="full"``) or all of them.

    Gaussian quanta shrink as schedules grow, so over all schedules the
    maximum sits at the unit schedule.
    """
    J = service.n_classes
    if scope == "full":
        fulls, phi = _full_quanta(service)
        return np.array([phi[fulls[:, j] > 0, j].max() for j in range(J)])
    if scope != "all":
        raise ConfigError("scope must be 'full' or 'all'")
    if isinstance(service.quanta, GaussianQuanta):
        return np.array([service.phi(tuple(int(i == j) for i in range(J)))[j] for j in range(J)])
    best = np.zeros(J)
    for s, phi in service.quanta.items():
        best = np.maximum(best, phi)
    return best


@dataclass(frozen=True)
class NonIdlingBounds:
    """Inner bounds for non-idling policies.

    Attributes
    ----------
    requirements : ndarray
        ``S_j``.
    phi_low : ndarray
        Smallest quantum of class ``j`` over full schedules serving it.
    phi_high : ndarray
        Largest quantum used in the additive form.
    slot_counts : ndarray
        ``ceil(S_j / phi_low_j)``, slots a message needs at worst.
    K : int
    min_full_service : float
        ``min`` over full schedules of ``sum_j s_j phi_j(s)``.
    """

    requirements: np.ndarray
    phi_low: np.ndarray
    phi_high: np.ndarray
    slot_counts: np.ndarray
    K: int
    min_full_service: float

    def slot_condition(self, rates):
        """``sum_j EA_j ceil(S_j/phi_low_j) < K``."""
        return float(np.dot(rates, self.slot_counts)) < self.K

    def work_condition(self, rates):
        """``sum_j EA_j (S_j + phi_high_j) < min_full sum_j s_j phi_j(s)``."""
        return float(np.dot(rates, self.requirements + self.phi_high)) < self.min_full_service

    def holds(self, rates):
        rates = np.asarray(rates, dtype=float)
        return self.slot_condition(rates) or self.work_condition(rates)

    def scale_limit(self, direction):
        """Largest ``t`` for which ``t * direction`` is certified stable (supremum)."""
        d = np.asarray(direction, dtype=float)
        a = float(np.dot(d, self.slot_counts))
        b = float(np.dot(d, self.requirements + self.phi_high))
        return max(self.K / a if a > 0 else math.inf, self.min_full_service / b if b > 0 else math.inf)


def nonidling_inner_bounds(service, phi_high_scope="full"):
    """Both non-idling inner bounds of a Gaussian or discrete independent-decoding model.

    Parameters
    ----------
    service : QuantumService
    phi_high_scope : {"full", "all"}
        Schedules over which the additive bound takes its largest quantum.
        Only full schedules are used once ``K`` or more messages wait, which
        is the regime the bound controls; ``"all"`` is the more conservative
        variant.
    """
    S = np.array(service.requirements)
    fulls, phi = _full_quanta(service)
    J = service.n_classes
    phi_low = np.array([phi[fulls[:, j] > 0, j].min() for j in range(J)])
    phi_high = largest_quanta(service, phi_high_scope)
    counts = np.array([ceil_multiple_count(S[j], phi_low[j]) for j in range(J)], dtype=float)
    min_service = float(np.min(np.sum(fulls * phi, axis=1)))
    return NonIdlingBounds(S, phi_low, phi_high, counts, service.K, min_service)


def nonidling_transience_bound(service, subset):
    """``max`` over full schedules of ``sum_{j in B} s_j phi_j(s)``."""
    B = sorted(set(int(j) for j in subset))
    if not B:
        raise ConfigError("transience subset must be non-empty")
    fulls, phi = _full_quanta(service)
    return float(np.max(np.sum((fulls * phi)[:, B], axis=1)))


def transience_scale(service, direction):
    """Smallest ``t`` at which ``t * direction`` meets some transience condition."""
    d = np.asarray(direction, dtype=float)
    S = np.array(service.requirements)
    J = service.n_classes
    best = math.inf
    fulls, phi = _full_quanta(service)
    served = fulls * phi
    for size in range(1, J + 1):
        for B in itertools.combinations(range(J), size):
            load = float(np.dot(S[list(B)], d[list(B)]))
            if load > 0:
                best = min(best, float(np.max(served[:, list(B)].sum(axis=1))) / load)
    return best


# ---------------------------------------------------------------- state-independent


def state_independent_region(service, policy):
    """Per-class thresholds ``sum_s p(s) s_j phi_j(s) / (S_j + phi_high_j)``.

    ``phi_high`` ranges over every schedule, since a state-independent
    policy may serve any sub-schedule.
    """
    J = service.n_classes
    S = np.array(service.requirements)
    phi_high = largest_quanta(service, "all")
    served = np.zeros(J)
    for s, w in policy.weights:
        if any(s):
            served += float(w) * np.array(s) * np.array(service.phi(s))
    return served / (S + phi_high)


# ---------------------------------------------------------------- block codes


@dataclass(frozen=True)
class BlockRegion:
    """Thresholds of a subclass state-independent policy."""

    subclass: dict
    per_class: np.ndarray

    def stable(self, rates):
        return bool(np.all(np.asarray(rates) < self.per_class))

    def unstable(self, rates):
        return bool(np.any(np.asarray(rates) > self.per_class))


def joint_region(service, policy):
    """Subclass thresholds ``p(s) s_j / N(s)`` and per-class sums ``sum_s p(s) r_j(s)``."""
    J = service.n_classes
    sub, per_class = {}, np.zeros(J)
    for s, w in policy.weights:
        if not any(s):
            continue
        N = service.length(s)
        for j in range(J):
            if s[j]:
                sub[(j, s)] = float(w) * s[j] / N
                per_class[j] += sub[(j, s)]
    return BlockRegion(sub, per_class)


# ---------------------------------------------------------------- convex hull


@dataclass(frozen=True)
class Membership:
    """Outcome of a convex-hull membership test.

    ``gauge`` is the least total weight of generators dominating the rate
    vector; the vector lies in the region when ``gauge <= 1`` and strictly
    inside when ``gauge < 1``. ``certificate`` holds ``w >= 0`` with
    ``w . r(s) <= 1`` for all generators and ``w . EA = gauge``.
    """

    inside: bool
    strict: bool
    gauge: float
    weights: dict
    certificate: np.ndarray

    def to_dict(self):
        return {
            "inside": self.inside,
            "strictly_inside": self.strict,
            "gauge": self.gauge if math.isfinite(self.gauge) else None,
            "weights": [{"s": list(s), "w": w} for s, w in sorted(self.weights.items())],
            "certificate": None if self.certificate is None else self.certificate.tolist(),
        }


def outer_membership(rates, generators, margin=STRICT_MARGIN):
    """Decide ``EA in conv({0} U {r(s)})`` by a linear program.

    Solves ``min sum(pi)`` subject to ``sum_s pi_s r(s) >= EA`` and
    ``pi >= 0``; the dual gives a separating certificate.
    """
    rates = np.asarray(rates, dtype=float)
    items = [(s, np.asarray(r, dtype=float)) for s, r in generators.items() if np.any(np.asarray(r) > 0)]
    J = rates.size
    if not np.any(rates > 0):
        return Membership(True, True, 0.0, {}, np.zeros(J))
    if not items:
        return Membership(False, False, math.inf, {}, (rates > 0).astype(float))
    R = np.array([r for _, r in items])
    uncovered = (rates > 0) & (R.max(axis=0) <= 0)
    if np.any(uncovered):
        return Membership(False, False, math.inf, {}, uncovered.astype(float))
    res = linprog(
        np.ones(len(items)), A_ub=-R.T, b_ub=-rates, bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise InfeasibleError(f"membership program failed: {res.message}")
    gauge = float(res.fun)
    weights = {s: float(w) for (s, _), w in zip(items, res.x) if w > 1e-15}
    cert = np.maximum(-np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
    inside = gauge <= 1.0 + 1e-12
    strict = gauge < 1.0 - margin
    return Membership(inside, strict, gauge, weights, cert)


@dataclass(frozen=True)
class SynthesizedPolicy:
    """A state-independent policy built for a target rate vector."""

    policy: PolicySpec
    splitting: tuple
    thresholds: np.ndarray
    slack: np.ndarray
    membership: Membership


def synthesize_policy(rates, service, floor=0.05, margin=STRICT_MARGIN):
    """Build a state-independent policy that keeps ``rates`` stable.

    The least-weight time share ``pi`` dominating ``rates`` is padded with
    the unused slot mass, spread in proportion to ``pi`` plus a uniform
    ``floor`` share over every non-empty schedule. Block modes also get a
    splitting ``mu_{js} proportional to pi(s) s_j / N(s)``, so only the
    schedules carrying the time share receive traffic and every subclass
    meets ``EA_js N(s) < p(s) s_j``.

    Raises
    ------
    InfeasibleError
        When ``rates`` is not strictly inside the achievable region.
    """
    rates = np.asarray(rates, dtype=float)
    block = isinstance(service, BlockService)
    if block:
        generators = rate_generators(service)
    else:
        phi_high = largest_quanta(service, "all")
        S = np.array(service.requirements)
        generators = {
            s: np.array(s) * np.array(service.phi(s)) / (S + phi_high)
            for s in service.quanta.keys()
            if any(s)
        }
    member = outer_membership(rates, generators, margin)
    if not member.strict:
        raise InfeasibleError(
            f"rate vector is not strictly inside the region (gauge {member.gauge:.6g})"
        )
    nonempty = [s for s in sorted(generators) if any(s)]
    used = math.fsum(member.weights.values())
    idle = 1.0 - used
    p = {}
    for s in nonempty:
        share = member.weights.get(s, 0.0) / used if used > 0 else 1.0 / len(nonempty)
        p[s] = member.weights.get(s, 0.0) + idle * ((1.0 - floor) * share + floor / len(nonempty))
    total = math.fsum(p.values())
    p = {s: w / total for s, w in p.items()}
    thresholds = sum((w * generators[s] for s, w in p.items()), np.zeros(rates.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(rates > 0, 1.0 - rates / thresholds, 1.0)
    kind = SUBCLASS if block else STATE_INDEPENDENT
    policy = PolicySpec(kind, tuple(p.items()))
    splitting = None
    if block:
        # traffic follows the time share pi; the padding only adds slack
        share = PolicySpec(kind, tuple((s, w / used) for s, w in member.weights.items())) if used > 0 else policy
        splitting = proportional_splitting(share, service.lengths, service.n_classes)
    return SynthesizedPolicy(policy, splitting, thresholds, slack, member)


# ---------------------------------------------------------------- capacity


@dataclass(frozen=True)
class AsymptoticCaps:
    """Limits of the Gaussian nat-rate thresholds."""

    single_user_limit: float
    saturation: float
    spectral_limit: float = 1.0


def interference_capacity(spec, s):
    """``C_j(s) = s_j ln(1 + G_j / (sum_i s_i G_i - G_j + 1))``."""
    g = np.array(spec.snr)
    s = np.asarray(s, dtype=float)
    total = float(np.dot(s, g))
    return np.array([s[j] * math.log1p(g[j] / (total - g[j] + 1.0)) if s[j] else 0.0 for j in range(g.size)])


def asymptotic_caps(spec, K, rho, j=0):
    """Single-user limit ``K ln(1 + G/((K-1) G + 1))``, ``rho/(1+rho)`` and 1."""
    g = spec.snr[j]
    return AsymptoticCaps(K * math.log1p(g / ((K - 1) * g + 1.0)), rho / (1.0 + rho))


def nat_threshold_single_class(spec, cls, K, rho):
    """Exact single-class nat threshold ``K phi ln M / ceil(S)_phi`` on ``ln(M) E A``."""
    rho = check_rho(rho)
    phi = spec_quantum(spec, K, rho)
    S = service_requirement(cls, rho)
    return K * phi * cls.log_alphabet / ceil_to_multiple(S, phi)


def spec_quantum(spec, K, rho):
    from .exponents import e0_gaussian_quantum

    return e0_gaussian_quantum(spec, (K,), 0, rho)


def code_rate_vector(classes, s, N):
    """Code rates ``R_j(s) = s_j ln M_j / N(s)``."""
    return np.array([a * c.log_alphabet / N for a, c in zip(s, classes)])


def capacity_membership(code_rates, constraints, strict=True):
    """Whether code rates lie (strictly) inside a pentagon or DBC constraint set."""
    return constraints.contains(code_rates, strict=strict)


def scaling_schedule(target, classes, scale, eps):
    """Schedule ``s_j = ceil(scale (r_j + eps) / ln M_j)`` realising target rates."""
    return tuple(
        max(1, math.ceil(scale * (r + eps) / c.log_alphabet)) for r, c in zip(target, classes)
    )


# ---------------------------------------------------------------- estimator


class StabilityRegion(BaseEstimator):
    """Estimator wrapper: fit a queueing model, then classify arrival-rate vectors.

    Parameters
    ----------
    mode : {"independent", "joint", "dbc"}
    channel : GaussianMacSpec, DiscreteMac or DegradedBroadcastSpec
    classes : sequence of MessageClass
    K : int
    rho : float
    input_distribution : InputDistribution, optional
        Needed for discrete MACs.
    policy : PolicySpec, optional
        When given, thresholds are those of this policy; otherwise the
        non-idling bounds (independent) or the full achievable region
        (block codes) are used.

    Attributes
    ----------
    service_ : QuantumService or BlockService
    generators_ : dict
        Rate vectors ``r(s)``.
    bounds_ : NonIdlingBounds or None
    """

    def __init__(self, mode="independent", channel=None, classes=None, K=1, rho=1.0,
                 input_distribution=None, policy=None):
        self.mode = mode
        self.channel = channel
        self.classes = classes
        self.K = K
        self.rho = rho
        self.input_distribution = input_distribution
        self.policy = policy

    def fit(self, X=None, y=None):
        if self.channel is None or not self.classes:
            raise ConfigError("StabilityRegion needs a channel and message classes")
        if self.mode == INDEPENDENT:
            self.service_ = independent_service(self.channel, self.classes, self.K, self.rho, self.input_distribution)
        elif self.mode in (JOINT, DBC):
            schedules = enumerate_schedules(len(self.classes), self.K)
            self.service_ = block_service(self.mode, self.channel, self.classes, schedules, self.K, self.rho,
                                          self.input_distribution)
        else:
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.generators_ = rate_generators(self.service_)
        self.bounds_ = nonidling_inner_bounds(self.service_) if self.mode == INDEPENDENT else None
        self.n_features_in_ = len(self.classes)
        return self

    def _scales(self, rate):
        """Scale factors to the certified-stable and certified-unstable boundaries."""
        if self.mode == INDEPENDENT:
            if self.policy is not None and self.policy.kind == STATE_INDEPENDENT:
                thr = state_independent_region(self.service_, self.policy)
                ratio = [t / r for r, t in zip(rate, thr) if r > 0]
                lim = min(ratio) if ratio else math.inf
                return lim, math.inf
            return self.bounds_.scale_limit(rate), transience_scale(self.service_, rate)
        if self.policy is not None:
            thr = joint_region(self.service_, self.policy).per_class
            ratio = [t / r for r, t in zip(rate, thr) if r > 0]
            lim = min(ratio) if ratio else math.inf
            return lim, lim
        gauge = outer_membership(rate, self.generators_).gauge
        lim = 1.0 / gauge if gauge > 0 else math.inf
        return lim, lim

    def decision_function(self, X):
        """``t - 1`` where ``t`` scales each row to the certified-stable boundary."""
        X = check_rates(X, self.n_features_in_)
        return np.array([self._scales(row)[0] - 1.0 for row in X])

    def predict(self, X):
        """1 for certified stable, -1 for certified unstable, 0 if undetermined."""
        X = check_rates(X, self.n_features_in_)
        out = np.zeros(X.shape[0], dtype=int)
        for i, row in enumerate(X):
            inner, outer = self._scales(row)
            if inner > 1.0:
                out[i] = 1
            elif outer < 1.0 or (self.mode == INDEPENDENT and outer <= 1.0):
                out[i] = -1
        return out
