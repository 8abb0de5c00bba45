"""Channel models, input distributions and mutual informations.

All information quantities are in nats. Sources, classes and receivers are
indexed from 0. Single-user channels are plain ``(n_inputs, n_outputs)``
row-stochastic arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ConfigError,
    check_positive_float,
    check_probability_vector,
    check_stochastic,
)


def as_channel(W):
    """Validate a single-user channel given as a row-stochastic matrix."""
    W = check_stochastic(W, name="channel")
    if W.ndim != 2:
        raise ConfigError("a single-user channel must be a 2-d matrix")
    return W


@dataclass(frozen=True)
class InputDistribution:
    """Product input distribution, one pmf per source.

    Parameters
    ----------
    probs : sequence of array_like
        ``probs[i]`` is the pmf of source ``i`` over its alphabet.
    """

    probs: tuple

    def __post_init__(self):
        if len(self.probs) == 0:
            raise ConfigError("input distribution needs at least one source")
        checked = tuple(
            check_probability_vector(p, name=f"Q[{i}]") for i, p in enumerate(self.probs)
        )
        object.__setattr__(self, "probs", checked)

    @classmethod
    def uniform(cls, sizes):
        return cls(tuple(np.full(n, 1.0 / n) for n in sizes))

    @property
    def sizes(self):
        return tuple(p.size for p in self.probs)

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, i):
        return self.probs[i]

    def to_dict(self):
        return [p.tolist() for p in self.probs]

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(np.asarray(p, dtype=float) for p in data))


def _as_input(q, sizes=None):
    if isinstance(q, InputDistribution):
        dist = q
    else:
        arr = np.asarray(q, dtype=float)
        dist = InputDistribution((arr,)) if arr.ndim == 1 else InputDistribution(tuple(q))
    if sizes is not None and dist.sizes != tuple(sizes):
        raise ConfigError(f"input distribution sizes {dist.sizes} do not match channel {tuple(sizes)}")
    return dist


@dataclass(frozen=True)
class DiscreteMac:
    """Discrete memoryless multiaccess channel ``p(y | x_0, ..., x_{J-1})``.

    Parameters
    ----------
    transition : array_like, shape (|X_0|, ..., |X_{J-1}|, |Y|)
        Conditional output law; the last axis sums to one.
    input_classes : sequence of int, optional
        Message class carried by each input when the channel is used with
        independent decoding. Defaults to one input per class.
    idle_symbols : sequence of int, optional
        Letter sent by an input that has nothing scheduled (independent
        decoding only). Defaults to symbol 0 on every input.
    """

    transition: np.ndarray
    input_classes: tuple = None
    idle_symbols: tuple = None

    def __post_init__(self):
        W = check_stochastic(self.transition, name="MAC transition")
        object.__setattr__(self, "transition", W)
        n_src = W.ndim - 1
        classes = tuple(range(n_src)) if self.input_classes is None else tuple(int(c) for c in self.input_classes)
        idle = (0,) * n_src if self.idle_symbols is None else tuple(int(v) for v in self.idle_symbols)
        if len(classes) != n_src or len(idle) != n_src:
            raise ConfigError("input_classes / idle_symbols must have one entry per input")
        if min(classes) < 0 or sorted(set(classes)) != list(range(max(classes) + 1)):
            raise ConfigError("input_classes must label classes 0..J-1 without gaps")
        if any(not (0 <= v < n) for v, n in zip(idle, W.shape[:-1])):
            raise ConfigError("idle symbol outside an input alphabet")
        object.__setattr__(self, "input_classes", classes)
        object.__setattr__(self, "idle_symbols", idle)

    @property
    def n_sources(self):
        return self.transition.ndim - 1

    @property
    def n_classes(self):
        return max(self.input_classes) + 1

    @property
    def input_sizes(self):
        return tuple(self.transition.shape[:-1])

    @property
    def n_outputs(self):
        return self.transition.shape[-1]

    def to_dict(self):
        return {
            "kind": "discrete_mac",
            "input_sizes": list(self.input_sizes),
            "n_outputs": self.n_outputs,
            "transition": self.transition.ravel().tolist(),
            "input_classes": list(self.input_classes),
            "idle_symbols": list(self.idle_symbols),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            shape = tuple(int(n) for n in data["input_sizes"]) + (int(data["n_outputs"]),)
            W = np.asarray(data["transition"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad discrete_mac spec: {exc}") from exc
        if W.size != int(np.prod(shape)):
            raise ConfigError("discrete_mac transition has the wrong number of entries")
        return cls(W.reshape(shape), data.get("input_classes"), data.get("idle_symbols"))


def adder_mac(n_inputs=2):
    """Binary adder MAC ``y = x_0 + ... + x_{n-1}``, one input per class."""
    shape = (2,) * n_inputs + (n_inputs + 1,)
    W = np.zeros(shape)
    for x in itertools.product((0, 1), repeat=n_inputs):
        W[x + (sum(x),)] = 1.0
    return DiscreteMac(W)


@dataclass(frozen=True)
class GaussianMacSpec:
    """Gaussian MAC described by the received SNR of each class."""

    snr: tuple

    def __post_init__(self):
        snr = tuple(check_positive_float(g, "snr") for g in np.atleast_1d(self.snr))
        if not snr:
            raise ConfigError("gaussian_mac needs at least one class")
        object.__setattr__(self, "snr", snr)

    @property
    def n_classes(self):
        return len(self.snr)

    def to_dict(self):
        return {"kind": "gaussian_mac", "snr": list(self.snr)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(tuple(data["snr"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad gaussian_mac spec: {exc}") from exc


@dataclass(frozen=True)
class DegradedBroadcastSpec:
    """Physically degraded broadcast channel with a superposition ladder.

    Receiver 0 is the strongest. The output chain is
    ``X_0 -> Y_0 -> Y_1 -> ... -> Y_{J-1}`` and the cloud-centre chain is
    ``X_{J-1} -> ... -> X_0``.

    Parameters
    ----------
    first_hop : array_like, shape (|X_0|, |Y_0|)
    degradations : sequence of array_like
        ``degradations[l]`` maps ``Y_l`` to ``Y_{l+1}``.
    ladder : sequence of array_like
        ``ladder[t][x_{t+1}, x_t] = Q_t(x_t | x_{t+1})`` for ``t < J-1``.
    top : array_like
        Marginal of the outermost layer ``X_{J-1}``.
    """

    first_hop: np.ndarray
    degradations: tuple = ()
    ladder: tuple = ()
    top: np.ndarray = field(default=None)

    def __post_init__(self):
        hop = check_stochastic(self.first_hop, name="first_hop")
        if hop.ndim != 2:
            raise ConfigError("first_hop must be a matrix")
        degs, prev = [], hop.shape[1]
        for l, D in enumerate(self.degradations):
            D = check_stochastic(D, name=f"degradations[{l}]")
            if D.ndim != 2 or D.shape[0] != prev:
                raise ConfigError(f"degradations[{l}] does not chain onto the previous output alphabet")
            degs.append(D)
            prev = D.shape[1]
        J = len(degs) + 1
        if len(self.ladder) != J - 1:
            raise ConfigError(f"ladder needs {J - 1} conditional kernels for {J} receivers")
        rungs, size = [], hop.shape[0]
        for t, C in enumerate(self.ladder):
            C = check_stochastic(C, name=f"ladder[{t}]")
            if C.ndim != 2 or C.shape[1] != size:
                raise ConfigError(f"ladder[{t}] has the wrong inner alphabet")
            rungs.append(C)
            size = C.shape[0]
        if self.top is None:
            raise ConfigError("top marginal is required")
        top = check_probability_vector(self.top, name="top", size=size)
        object.__setattr__(self, "first_hop", hop)
        object.__setattr__(self, "degradations", tuple(degs))
        object.__setattr__(self, "ladder", tuple(rungs))
        object.__setattr__(self, "top", top)

    @property
    def n_receivers(self):
        return len(self.degradations) + 1

    @property
    def n_classes(self):
        return self.n_receivers

    def input_marginal(self, k):
        """Marginal pmf of layer ``X_k``."""
        m = self.top
        for t in range(self.n_receivers - 2, k - 1, -1):
            m = m @ self.ladder[t]
        return m

    def to_dict(self):
        return {
            "kind": "dbc",
            "first_hop": self.first_hop.tolist(),
            "degradations": [D.tolist() for D in self.degradations],
            "ladder": [C.tolist() for C in self.ladder],
            "top": self.top.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                np.asarray(data["first_hop"], dtype=float),
                tuple(np.asarray(D, dtype=float) for D in data.get("degradations", [])),
                tuple(np.asarray(C, dtype=float) for C in data.get("ladder", [])),
                np.asarray(data["top"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad dbc spec: {exc}") from exc


def channel_from_dict(data):
    """Build a channel object from its JSON form."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("channel spec must be an object with a 'kind' field")
    kinds = {"discrete_mac": DiscreteMac, "gaussian_mac": GaussianMacSpec, "dbc": DegradedBroadcastSpec}
    if data["kind"] not in kinds:
        raise ConfigError(f"unknown channel kind {data['kind']!r}")
    return kinds[data["kind"]].from_dict(data)


def _xlogy_ratio(joint, num, den):
    """Sum of ``joint * ln(num/den)`` over the support of ``joint``."""
    mask = joint > 0
    return float(np.sum(joint[mask] * (np.log(num[mask]) - np.log(den[mask]))))


def mutual_information(W, q):
    """Mutual information ``I(X;Y)`` of a single-user channel.

    Parameters
    ----------
    W : array_like, shape (n_inputs, n_outputs)
        Row-stochastic channel matrix.
    q : array_like or InputDistribution
        Input pmf.

    Returns
    -------
    float
        ``I(X;Y)`` in nats.
    """
    W = as_channel(W)
    q = _as_input(q, sizes=(W.shape[0],))[0]
    joint = q[:, None] * W
    py = joint.sum(axis=0)
    return max(0.0, _xlogy_ratio(joint, W, np.broadcast_to(py, W.shape)))


def _check_subset(subset, n_sources):
    S = tuple(sorted(set(int(i) for i in subset)))
    if not S:
        raise ConfigError("source subset must be non-empty")
    if S[0] < 0 or S[-1] >= n_sources:
        raise ConfigError(f"subset {S} references a missing source")
    return S


def _product_weights(probs):
    w = np.ones(())
    for p in probs:
        w = np.multiply.outer(w, p)
    return w


def mac_conditional_mi(mac, q, subset):
    """Conditional mutual information ``I(X(S); Y | X(S^c))`` under product ``q``."""
    q = _as_input(q, sizes=mac.input_sizes)
    S = _check_subset(subset, mac.n_sources)
    W = mac.transition
    weights = _product_weights(q.probs)[..., None]
    joint = weights * W
    # p(y | x(S^c)) obtained by averaging W over x(S) with Q_S
    qs = _product_weights([q[i] if i in S else np.ones(n) for i, n in enumerate(mac.input_sizes)])
    cond = np.sum(qs[..., None] * W, axis=S, keepdims=True)
    return max(0.0, _xlogy_ratio(joint, W, np.broadcast_to(cond, W.shape)))


@dataclass(frozen=True)
class LinearConstraints:
    """Rate constraints ``A r <= b`` with a name per row."""

    A: np.ndarray
    b: np.ndarray
    labels: tuple

    def contains(self, r, strict=False, tol=0.0):
        """Membership of a non-negative rate vector; ``strict`` makes every row strict."""
        r = np.asarray(r, dtype=float)
        if np.any(r < -tol):
            return False
        lhs = self.A @ r
        if strict:
            return bool(np.all(lhs < self.b - tol))
        return bool(np.all(lhs <= self.b + tol))

    def slack(self, r):
        return self.b - self.A @ np.asarray(r, dtype=float)


def mac_pentagon(mac, q):
    """The ``2^J - 1`` constraints ``sum_{j in S} r_j <= I(X(S);Y|X(S^c))``."""
    J = mac.n_sources
    rows, rhs, labels = [], [], []
    for size in range(1, J + 1):
        for S in itertools.combinations(range(J), size):
            row = np.zeros(J)
            row[list(S)] = 1.0
            rows.append(row)
            rhs.append(mac_conditional_mi(mac, q, S))
            labels.append(S)
    return LinearConstraints(np.array(rows), np.array(rhs), tuple(labels))


def _check_layers(spec, k, j):
    J = spec.n_receivers
    if not (0 <= j < J and 0 <= k < J):
        raise ConfigError(f"layer/receiver index out of range for J={J}")
    if k < j:
        raise ConfigError(f"receiver {j} never decodes the inner layer {k} (requires k >= j)")


def dbc_effective_channel(spec, k, j):
    """Channel ``p'(y_j | x_k)`` seen by receiver ``j`` for layer ``k``.

    The inner layers ``x_0 .. x_{k-1}`` are summed out through the
    superposition ladder and the output is pushed through the degradations
    ``Y_0 -> ... -> Y_j``.
    """
    _check_layers(spec, k, j)
    P = spec.first_hop
    for t in range(k):
        P = spec.ladder[t] @ P
    for l in range(j):
        P = P @ spec.degradations[l]
    return P


def dbc_conditional_mi(spec, k, j):
    """``I(X_k; Y_j | X_{k+1})``, or ``I(X_k; Y_j)`` for the outermost layer."""
    P = dbc_effective_channel(spec, k, j)
    if k == spec.n_receivers - 1:
        return mutual_information(P, spec.top)
    m = spec.input_marginal(k + 1)
    C = spec.ladder[k]
    return float(sum(m[z] * mutual_information(P, C[z]) for z in range(m.size) if m[z] > 0))


def dbc_rate_constraints(spec):
    """Per-receiver bounds ``r_j <= I(X_j;Y_j|X_{j+1})`` and ``r_J <= I(X_J;Y_J)``."""
    J = spec.n_receivers
    b = np.array([dbc_conditional_mi(spec, j, j) for j in range(J)])
    return LinearConstraints(np.eye(J), b, tuple((j,) for j in range(J)))
