"""Gallager random-coding exponents.

Every exponent here has the form ``-ln sum_z w(z) G_z(rho)`` with
``G_z(rho) = sum_y [sum_x q_z(x) p_z(y|x)^{1/(1+rho)}]^{1+rho}``; the helpers
evaluate it in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._validation import ConfigError, NonConvergenceError, check_rho, check_schedule
from .channel import (
    _as_input,
    _check_layers,
    _check_subset,
    _product_weights,
    as_channel,
    dbc_effective_channel,
)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _log_gallager(q, W, rho):
    """``ln sum_y [sum_x q(x) W(x,y)^{1/(1+rho)}]^{1+rho}`` over leading batch axes.

    ``q`` has shape ``(..., nx)`` and ``W`` shape ``(..., nx, ny)``.
    """
    terms = _log(q)[..., None] + _log(W) / (1.0 + rho)
    inner = logsumexp(terms, axis=-2)
    return logsumexp((1.0 + rho) * inner, axis=-1)


def _mixture_exponent(log_weights, log_sums):
    """``-ln sum_z w(z) G_z`` given log weights and log sums."""
    return max(0.0, -float(logsumexp(log_weights + log_sums)))


def e0_single(W, q, rho):
    """Gallager function ``E_0(rho, Q)`` of a single-user channel.

    Parameters
    ----------
    W : array_like, shape (n_inputs, n_outputs)
    q : array_like or InputDistribution
    rho : float in (0, 1]

    Returns
    -------
    float
        Exponent in nats per channel use.
    """
    W = as_channel(W)
    q = _as_input(q, sizes=(W.shape[0],))[0]
    rho = check_rho(rho)
    return max(0.0, -float(_log_gallager(q, W, rho)))


def e0_mac_subset(mac, q, subset, rho):
    """Joint-decoding exponent ``E_{o,S}(rho, Q)`` of a source subset.

    The sources outside ``S`` are averaged with their input laws outside the
    ``1+rho`` power, i.e. the decoder knows their codewords.
    """
    q = _as_input(q, sizes=mac.input_sizes)
    S = _check_subset(subset, mac.n_sources)
    rho = check_rho(rho)
    Sc = tuple(i for i in range(mac.n_sources) if i not in S)
    W = np.transpose(mac.transition, Sc + S + (mac.n_sources,))
    sizes = mac.input_sizes
    n_out = int(np.prod([sizes[i] for i in Sc], dtype=int))
    n_in = int(np.prod([sizes[i] for i in S], dtype=int))
    W = W.reshape(n_out, n_in, mac.n_outputs)
    q_in = _product_weights([q[i] for i in S]).ravel()
    q_out = _product_weights([q[i] for i in Sc]).ravel()
    return _mixture_exponent(_log(q_out), _log_gallager(q_in, W, rho))


def effective_channel_independent(mac, q, s, j):
    """Channel ``p_j^s(y | x_j)`` seen by one class-``j`` message under ``s``.

    The inputs of ``mac`` are transmitter slots labelled by class. One slot
    of class ``j`` carries the desired message, the next ``s_j - 1`` slots of
    class ``j`` and the first ``s_l`` slots of each other class carry
    interfering codeletters drawn from ``q``, and every remaining slot sends
    its idle symbol.
    """
    q = _as_input(q, sizes=mac.input_sizes)
    s = check_schedule(s, n_classes=mac.n_classes)
    if not (0 <= j < len(s)) or s[j] == 0:
        raise ConfigError("effective channel needs s_j > 0")
    slots = {c: [i for i, lab in enumerate(mac.input_classes) if lab == c] for c in range(len(s))}
    for c, count in enumerate(s):
        if count > len(slots[c]):
            raise ConfigError(f"schedule {s} needs {count} class-{c} inputs but the MAC has {len(slots[c])}")
    desired = slots[j][0]
    active = set(slots[j][: s[j]])
    for c, count in enumerate(s):
        active.update(slots[c][:count])
    W = mac.transition
    # fix idle inputs, average interferers, keep the desired one
    for i in range(mac.n_sources - 1, -1, -1):
        if i == desired:
            continue
        if i in active:
            W = np.tensordot(W, q[i], axes=([i], [0]))
        else:
            W = np.take(W, mac.idle_symbols[i], axis=i)
    return np.asarray(W)


def e0_independent(mac, q, s, j, rho):
    """Per-class exponent ``E_{o,j}^s`` under independent decoding.

    Builds :func:`effective_channel_independent` and applies :func:`e0_single`.
    """
    W = effective_channel_independent(mac, q, s, j)
    desired = [i for i, lab in enumerate(mac.input_classes) if lab == j][0]
    return e0_single(W, _as_input(q, sizes=mac.input_sizes)[desired], rho)


def e0_gaussian_quantum(spec, s, j, rho):
    """Closed-form Gaussian service quantum ``phi_j(s)``.

    ``rho * ln(1 + G_j / ((1 + rho) (sum_k s_k G_k - G_j + 1)))`` with ``G``
    the received SNRs.
    """
    rho = check_rho(rho)
    s = check_schedule(s, n_classes=spec.n_classes)
    if not (0 <= j < len(s)) or s[j] == 0:
        raise ConfigError("gaussian quantum needs s_j > 0")
    snr = spec.snr
    interference = math.fsum(sk * g for sk, g in zip(s, snr)) - snr[j]
    return rho * math.log1p(snr[j] / ((1.0 + rho) * (interference + 1.0)))


def e0_dbc(spec, k, j, rho):
    """Successive-decoding exponent ``E_{o,X_k,Y_j}`` for a degraded broadcast channel.

    Inner layers use the ladder conditional ``Q_k(. | x_{k+1})`` averaged over
    the marginal of ``x_{k+1}``; the outermost layer uses its marginal.
    """
    _check_layers(spec, k, j)
    rho = check_rho(rho)
    P = dbc_effective_channel(spec, k, j)
    if k == spec.n_receivers - 1:
        return max(0.0, -float(_log_gallager(spec.top, P, rho)))
    m = spec.input_marginal(k + 1)
    C = spec.ladder[k]
    log_sums = _log_gallager(C, np.broadcast_to(P, (C.shape[0],) + P.shape), rho)
    return _mixture_exponent(_log(m), log_sums)


@dataclass(frozen=True)
class LimitEstimate:
    """Extrapolated ``lim_{rho->0} E_0(rho)/rho`` with an error estimate."""

    value: float
    tolerance: float
    grid: tuple
    ratios: tuple


DEFAULT_LIMIT_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def e0_over_rho_limit(exponent, grid=DEFAULT_LIMIT_GRID, max_tolerance=1e-5):
    """Estimate ``lim_{rho -> 0} E_0(rho)/rho`` for an exponent family.

    ``E_0(rho)/rho = I - a rho + O(rho^2)`` near zero, so consecutive grid
    points are combined by Richardson extrapolation of the linear term.

    Parameters
    ----------
    exponent : callable
        ``rho -> E_0(rho)``.
    grid : sequence of float
        Decreasing geometric grid of ``rho`` values.
    max_tolerance : float
        Largest accepted spread between the last two extrapolants.

    Returns
    -------
    LimitEstimate

    Raises
    ------
    NonConvergenceError
        If the extrapolants do not settle, which points at a broken exponent.
    """
    grid = tuple(float(r) for r in grid)
    if len(grid) < 3 or any(b >= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("limit grid must hold at least 3 decreasing values")
    ratios = np.array([exponent(r) / r for r in grid])
    if not np.all(np.isfinite(ratios)):
        raise NonConvergenceError("exponent returned non-finite values on the grid")
    steps = np.array(grid[:-1]) / np.array(grid[1:])
    extrap = (steps * ratios[1:] - ratios[:-1]) / (steps - 1.0)
    tol = float(abs(extrap[-1] - extrap[-2]))
    scale = max(1.0, abs(float(extrap[-1])))
    if tol > max_tolerance * scale:
        raise NonConvergenceError(
            f"E0/rho extrapolants did not settle: last values {extrap[-3:].tolist()}"
        )
    return LimitEstimate(float(extrap[-1]), tol, grid, tuple(ratios.tolist()))
