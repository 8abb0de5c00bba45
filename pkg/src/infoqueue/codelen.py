"""Service requirements, random-coding error bounds and minimal codeword lengths."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import (
    ConfigError,
    InfeasibleError,
    check_positive_float,
    check_rho,
    check_schedule,
)
from .exponents import e0_dbc, e0_mac_subset

CEIL_SLACK = 1e-12
# exponents at or below this are rounding noise on a useless channel
MIN_EXPONENT = 1e-12


@dataclass(frozen=True)
class MessageClass:
    """A message class: alphabet size, target error probability and SNR.

    ``alphabet_size`` may be an arbitrarily large Python integer; only its
    natural logarithm enters the computations.
    """

    alphabet_size: int
    target_error: float
    snr: float = None

    def __post_init__(self):
        M = self.alphabet_size
        if isinstance(M, bool) or not isinstance(M, (int, np.integer)) or M < 2:
            raise ConfigError(f"alphabet_size must be an integer >= 2, got {M!r}")
        pe = float(self.target_error)
        if not (0.0 < pe < 1.0):
            raise ConfigError(f"target_error must lie in (0, 1), got {pe!r}")
        object.__setattr__(self, "alphabet_size", int(M))
        object.__setattr__(self, "target_error", pe)
        if self.snr is not None:
            object.__setattr__(self, "snr", check_positive_float(self.snr, "snr"))

    @property
    def log_alphabet(self):
        return math.log(self.alphabet_size)

    def to_dict(self):
        out = {"alphabet_size": self.alphabet_size, "target_error": self.target_error}
        if self.snr is not None:
            out["snr"] = self.snr
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "target_error" not in data:
            raise ConfigError(f"message class needs target_error: {data!r}")
        if "log2_alphabet_size" in data:
            M = 2 ** int(data["log2_alphabet_size"])
        elif "alphabet_size" in data:
            M = data["alphabet_size"]
            M = int(M) if isinstance(M, str) else M
        else:
            raise ConfigError(f"message class needs alphabet_size or log2_alphabet_size: {data!r}")
        return cls(M, data["target_error"], data.get("snr"))


def service_requirement(cls, rho):
    """Service requirement ``S = -ln p_e + rho ln M`` in nats."""
    rho = check_rho(rho)
    return -math.log(cls.target_error) + rho * cls.log_alphabet


def ceil_multiple_count(x, q):
    """Smallest ``n >= 1`` with ``x <= n q`` (with a 1e-12 relative slack)."""
    if q <= 0:
        raise ConfigError("ceiling quantum must be positive")
    return max(1, math.ceil(x / q - CEIL_SLACK))


def ceil_to_multiple(x, q):
    """``min{n >= 1 : x <= n q} * q``."""
    return ceil_multiple_count(x, q) * q


def _active(s):
    return tuple(j for j, c in enumerate(s) if c > 0)


def _subsets(items):
    for size in range(1, len(items) + 1):
        yield from itertools.combinations(items, size)


def subset_exponents(mac, q, s, rho):
    """``E_{o,S}`` for every non-empty subset of the classes active in ``s``."""
    active = _active(s)
    return {S: e0_mac_subset(mac, q, S, rho) for S in _subsets(active)}


def _nat_loads(classes, s, rho):
    return {j: rho * s[j] * classes[j].log_alphabet for j in range(len(s))}


def _check_joint_inputs(mac, classes, s):
    if mac.n_sources != len(classes):
        raise ConfigError("joint decoding needs one MAC input per message class")
    s = check_schedule(s, n_classes=len(classes))
    if not any(s):
        raise ConfigError("empty schedule has no codeword")
    return s


def chi_mac(mac, q, classes, s, rho, N, exponents=None, subset=None):
    """Random-coding bound ``chi(J(s), N)`` on the joint decoding error.

    ``sum_S exp(rho sum_{j in S} s_j ln M_j - N E_{o,S})`` over non-empty
    subsets of the active classes, or of ``subset`` if given.
    """
    s = _check_joint_inputs(mac, classes, s)
    if N < 1:
        raise ConfigError("codeword length must be >= 1")
    if exponents is None:
        exponents = subset_exponents(mac, q, s, rho)
    loads = _nat_loads(classes, s, rho)
    pool = _active(s) if subset is None else tuple(sorted(subset))
    return math.fsum(
        math.exp(sum(loads[j] for j in S) - N * exponents[S]) for S in _subsets(pool)
    )


@dataclass(frozen=True)
class CodelengthResult:
    """Minimal codeword length with its analytic bracket and certificate."""

    n: int
    lower: int
    upper: int
    chi: float
    chi_prev: float
    target_error: float
    anomaly: str = None

    def to_dict(self):
        return {
            "N": self.n,
            "lower": self.lower,
            "upper": self.upper,
            "chi_N": self.chi,
            "chi_N_minus_1": self.chi_prev,
            "target_error": self.target_error,
            "anomaly": self.anomaly,
        }


def _smallest_length(chi, target, lower, upper):
    """Smallest ``N >= 1`` with ``chi(N) <= target`` for decreasing ``chi``."""
    anomaly = None
    lo, hi = max(1, lower), max(1, upper)
    if hi < lo:
        anomaly = f"degenerate bracket [{lower}, {upper}]"
        lo, hi = 1, max(lo, hi)
    while chi(hi) > target:
        anomaly = anomaly or f"upper bound {upper} violated numerically"
        lo, hi = hi + 1, 2 * hi
    if lo > 1 and chi(lo - 1) <= target:
        anomaly = anomaly or f"lower bound {lower} violated numerically"
        lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if chi(mid) <= target:
            hi = mid
        else:
            lo = mid + 1
    prev = chi(lo - 1) if lo > 1 else math.inf
    return lo, chi(lo), prev, anomaly


def _bracket(terms, target, n_terms):
    """Analytic bracket from ``(nat_load, exponent)`` pairs."""
    lower = max(ceil_multiple_count(-math.log(target) + load, E) for load, E in terms)
    upper = max(ceil_multiple_count(-math.log(target / n_terms) + load, E) for load, E in terms)
    return lower, upper


def min_codeword_length_mac(mac, q, classes, s, rho, target_error=None):
    """Smallest ``N`` with ``chi(J(s), N) <= p_e`` under joint decoding.

    Parameters
    ----------
    mac : DiscreteMac
        One input per class; class ``j`` sends its ``s_j`` messages jointly
        encoded on input ``j``.
    q : InputDistribution
    classes : sequence of MessageClass
    s : schedule
    rho : float
    target_error : float, optional
        Joint error target. Defaults to the smallest target among the active
        classes.

    Returns
    -------
    CodelengthResult

    Raises
    ------
    InfeasibleError
        If some subset exponent is zero, so ``chi`` never falls below ``p_e``.
    """
    s = _check_joint_inputs(mac, classes, s)
    rho = check_rho(rho)
    active = _active(s)
    if target_error is None:
        target_error = min(classes[j].target_error for j in active)
    exps = subset_exponents(mac, q, s, rho)
    for S, E in exps.items():
        if not E > MIN_EXPONENT:
            raise InfeasibleError(f"subset {S} has zero exponent; chi does not decay in N")
    loads = _nat_loads(classes, s, rho)
    terms = [(sum(loads[j] for j in S), E) for S, E in exps.items()]
    lower, upper = _bracket(terms, target_error, len(exps))

    def chi(N):
        return math.fsum(math.exp(load - N * E) for load, E in terms)

    n, c, prev, anomaly = _smallest_length(chi, target_error, lower, upper)
    return CodelengthResult(n, lower, upper, c, prev, target_error, anomaly)


def _check_dbc_inputs(spec, classes, s, null_messages):
    J = spec.n_receivers
    if len(classes) != J:
        raise ConfigError("degraded broadcast needs one message class per receiver")
    s = check_schedule(s, n_classes=J)
    if not any(s):
        raise ConfigError("empty schedule has no codeword")
    logs = [
        math.log(c.alphabet_size + (1 if null_messages else 0)) for c in classes
    ]
    return s, logs


def chi_dbc(spec, classes, s, rho, j, N, null_messages=False):
    """Successive-decoding bound ``chi_j = sum_{k>=j} exp(rho s_k ln M_k - N E_{o,X_k,Y_j})``."""
    s, logs = _check_dbc_inputs(spec, classes, s, null_messages)
    rho = check_rho(rho)
    if s[j] == 0:
        raise ConfigError(f"receiver {j} has nothing scheduled")
    return math.fsum(
        math.exp(rho * s[k] * logs[k] - N * e0_dbc(spec, k, j, rho))
        for k in range(j, spec.n_receivers)
    )


@dataclass(frozen=True)
class DbcCodelength:
    """Per-receiver lengths ``N_j(s)`` and the common length ``N(s)``."""

    n: int
    per_receiver: dict

    def to_dict(self):
        return {"N": self.n, "per_receiver": {str(j): r.to_dict() for j, r in self.per_receiver.items()}}


def min_codeword_length_dbc(spec, classes, s, rho, null_messages=False):
    """``N_j(s)`` for every scheduled receiver and ``N(s) = max_j N_j(s)``.

    With ``null_messages`` the alphabet of every class is inflated by one to
    carry an explicit "no message" symbol.
    """
    s, logs = _check_dbc_inputs(spec, classes, s, null_messages)
    rho = check_rho(rho)
    J = spec.n_receivers
    out = {}
    for j in range(J):
        if s[j] == 0:
            continue
        terms = []
        for k in range(j, J):
            E = e0_dbc(spec, k, j, rho)
            if not E > MIN_EXPONENT:
                raise InfeasibleError(f"layer {k} at receiver {j} has zero exponent")
            terms.append((rho * s[k] * logs[k], E))
        target = classes[j].target_error
        lower, upper = _bracket(terms, target, J - j)

        def chi(N, terms=terms):
            return math.fsum(math.exp(load - N * E) for load, E in terms)

        n, c, prev, anomaly = _smallest_length(chi, target, lower, upper)
        out[j] = CodelengthResult(n, lower, upper, c, prev, target, anomaly)
    return DbcCodelength(max(r.n for r in out.values()), out)
