"""Schedule spaces and the three scheduling policy families."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import NORM_TOL, ConfigError, check_schedule

NONIDLING = "nonidling"
STATE_INDEPENDENT = "state_independent"
SUBCLASS = "subclass_state_independent"
POLICY_KINDS = (NONIDLING, STATE_INDEPENDENT, SUBCLASS)
TIE_BREAKS = ("renormalize", "maxweight")


def _all_schedules(J, K):
    if J == 1:
        for a in range(K + 1):
            yield (a,)
        return
    for a in range(K + 1):
        for rest in _all_schedules(J - 1, K - a):
            yield (a,) + rest


def _full_schedules(J, K):
    if J == 1:
        yield (K,)
        return
    for a in range(K + 1):
        for rest in _full_schedules(J - 1, K - a):
            yield (a,) + rest


def enumerate_schedules(J, K, full=False):
    """All schedules with ``sum(s) <= K`` (or ``== K`` when ``full``), in lexicographic order."""
    if J < 1 or K < 1:
        raise ConfigError("need J >= 1 and K >= 1")
    return list(_full_schedules(J, K) if full else _all_schedules(J, K))


def is_subschedule(small, big):
    """``small <= big`` componentwise."""
    return all(a <= b for a, b in zip(small, big))


def maximal_subschedule(s, counts):
    """Componentwise ``min(s_j, n_j)``."""
    return tuple(min(a, n) for a, n in zip(s, counts))


@dataclass(frozen=True)
class PolicySpec:
    """A stationary scheduling policy.

    Parameters
    ----------
    kind : {"nonidling", "state_independent", "subclass_state_independent"}
    weights : tuple of (schedule, weight)
        The distribution ``p`` over schedules. Empty for a non-idling policy
        means uniform over the feasible full schedules.
    tie_break : {"renormalize", "maxweight"}
        Non-idling rule for picking among feasible full schedules.
    """

    kind: str
    weights: tuple = ()
    tie_break: str = "renormalize"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(f"unknown tie_break {self.tie_break!r}")
        items = self.weights.items() if isinstance(self.weights, dict) else self.weights
        merged = {}
        for s, w in items:
            s = check_schedule(s)
            if isinstance(w, float) and (not math.isfinite(w)):
                raise ConfigError("policy weights must be finite")
            if w < 0:
                raise ConfigError("policy weights must be non-negative")
            merged[s] = merged.get(s, 0) + w
        if len({len(s) for s in merged}) > 1:
            raise ConfigError("policy schedules have inconsistent lengths")
        if self.kind != NONIDLING or merged:
            total = sum(merged.values())
            if abs(float(total) - 1.0) > NORM_TOL * max(1, len(merged)):
                raise ConfigError(f"policy weights sum to {float(total)!r}, not 1")
        object.__setattr__(self, "weights", tuple(sorted(merged.items())))

    @property
    def distribution(self):
        return dict(self.weights)

    def support(self):
        return [s for s, w in self.weights if w > 0]

    def to_dict(self):
        return {
            "kind": self.kind,
            "p": [{"s": list(s), "w": float(w)} for s, w in self.weights],
            "tie_break": self.tie_break,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("policy spec must be an object with a 'kind' field")
        try:
            weights = tuple((tuple(e["s"]), e["w"]) for e in data.get("p", []))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad policy weight entry: {exc}") from exc
        return cls(data["kind"], weights, data.get("tie_break", "renormalize"))


def induced_distribution(policy, counts):
    """Pushforward of ``p`` through ``t -> maximal_subschedule(t, counts)``."""
    if policy.kind == NONIDLING:
        raise ConfigError("induced distribution is defined for state-independent policies")
    out = {}
    for t, w in policy.weights:
        s = maximal_subschedule(t, counts)
        out[s] = out.get(s, 0) + w
    return out


def feasible_full(counts, K):
    """Full schedules (``sum == K``) that fit inside the queue contents."""
    return [s for s in _full_schedules(len(counts), K) if is_subschedule(s, counts)]


def _draw(u, rng):
    if u is None:
        if rng is None:
            raise ConfigError("need an rng or a uniform draw")
        u = float(rng.random())
    return u


def _pick(items, weights, u):
    total = math.fsum(float(w) for w in weights)
    cum = np.cumsum([float(w) for w in weights])
    idx = bisect.bisect_right(cum.tolist(), u * total)
    return items[min(idx, len(items) - 1)]


def nonidling_choice(policy, counts, K, u, service=None):
    """Non-idling action for queue contents ``counts`` and uniform draw ``u``.

    With fewer than ``K`` messages everyone is served. Otherwise a feasible
    full schedule is picked: by ``p`` restricted to the feasible set and
    renormalized (uniform if that mass is zero), or by the largest
    ``sum_j s_j phi_j(s)`` when ``tie_break == "maxweight"``.
    """
    if sum(counts) < K:
        return tuple(counts)
    options = feasible_full(counts, K)
    assert options, "a feasible full schedule always exists when n >= K"
    if policy.tie_break == "maxweight":
        if service is None:
            raise ConfigError("maxweight tie-break needs service quanta")
        scores = [sum(a * f for a, f in zip(s, service(s))) for s in options]
        return options[int(np.argmax(scores))]
    p = policy.distribution
    weights = [p.get(s, 0) for s in options]
    if not any(w > 0 for w in weights):
        weights = [1] * len(options)
    return _pick(options, weights, u)


def sample_schedule(policy, u):
    """Draw a schedule from ``p`` by inverse transform of ``u``."""
    items = [s for s, _ in policy.weights]
    return _pick(items, [w for _, w in policy.weights], u)


def subclass_controls(state, s, codeword_length):
    """Ongoing cohort, fresh counts and maximal sub-schedule on the ``s``-slice.

    Parameters
    ----------
    state : dict
        ``(j, schedule) -> list`` of integer residuals, FIFO order.
    s : schedule
    codeword_length : int
        ``N(s)``.

    Returns
    -------
    eta, beta, zstar : dict
        Keyed by ``(j, s)``; zero entries are omitted.
    """
    s = tuple(s)
    N = codeword_length
    eta, beta, zstar = {}, {}, {}
    for j, sj in enumerate(s):
        if sj == 0:
            continue
        residuals = state.get((j, s), [])
        ongoing = sum(1 for x in residuals if 0 < x < N)
        fresh = sum(1 for x in residuals if x == N)
        if ongoing:
            eta[(j, s)] = ongoing
        if fresh:
            beta[(j, s)] = fresh
        if residuals:
            zstar[(j, s)] = min(sj, len(residuals))
    return eta, beta, zstar


def choose_action(policy, state, rng=None, *, K=None, u=None, service=None, codeword_lengths=None):
    """Action of ``policy`` in ``state``.

    For the non-idling and state-independent kinds ``state`` is the vector
    of queue lengths and the result a schedule. For the subclass kind
    ``state`` maps ``(j, s)`` to residual lists and the result is a subclass
    schedule ``{(j, s): count}``.
    """
    u = _draw(u, rng)
    if policy.kind == NONIDLING:
        if K is None:
            raise ConfigError("non-idling policy needs K")
        return nonidling_choice(policy, tuple(state), K, u, service)
    s = sample_schedule(policy, u)
    if policy.kind == STATE_INDEPENDENT:
        return maximal_subschedule(s, tuple(state))
    if codeword_lengths is None:
        raise ConfigError("subclass policy needs codeword lengths N(s)")
    eta, _, zstar = subclass_controls(state, s, codeword_lengths[s])
    return eta if eta else zstar


def exact_weights(pairs):
    """Helper turning ``(schedule, "p/q")`` pairs into exact rational weights."""
    return tuple((tuple(s), Fraction(w)) for s, w in pairs)
