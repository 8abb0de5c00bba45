import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bsc, cascade_dbc, random_channel, random_dbc, random_mac, random_pmf, rhos, seeds
from infoqueue._validation import ConfigError, NonConvergenceError
from infoqueue.channel import (
    DegradedBroadcastSpec,
    DiscreteMac,
    GaussianMacSpec,
    InputDistribution,
    adder_mac,
    dbc_conditional_mi,
    mac_conditional_mi,
    mutual_information,
)
from infoqueue.exponents import (
    e0_dbc,
    e0_gaussian_quantum,
    e0_independent,
    e0_mac_subset,
    e0_over_rho_limit,
    e0_single,
    effective_channel_independent,
)

RHO_GRID = np.linspace(0.05, 1.0, 20)


def direct_e0(W, q, rho):
    """Plain-loop evaluation of the Gallager function."""
    total = 0.0
    for y in range(W.shape[1]):
        inner = sum(q[x] * W[x, y] ** (1 / (1 + rho)) for x in range(W.shape[0]))
        total += inner ** (1 + rho)
    return -math.log(total)


def test_noiseless_collapses_to_rho_ln2():
    for rho in (0.1, 0.5, 1.0):
        assert e0_single(np.eye(2), [0.5, 0.5], rho) == pytest.approx(rho * math.log(2), abs=1e-15)


def test_bsc_value():
    expected = math.log(2) - math.log(1 + 2 * math.sqrt(0.09))
    assert e0_single(bsc(0.1), [0.5, 0.5], 1.0) == pytest.approx(expected, abs=1e-15)
    assert e0_single(bsc(0.1), [0.5, 0.5], 1.0) == pytest.approx(0.22314, abs=1e-5)


def test_small_rho_goes_to_zero():
    assert e0_single(bsc(0.1), [0.5, 0.5], 1e-9) < 1e-9


def test_rho_domain():
    with pytest.raises(ConfigError):
        e0_single(bsc(0.1), [0.5, 0.5], 0.0)
    with pytest.raises(ConfigError):
        e0_single(bsc(0.1), [0.5, 0.5], 1.5)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(2, 4), rhos)
def test_matches_direct_loop(seed, n_in, n_out, rho):
    rng = np.random.default_rng(seed)
    W, q = random_channel(rng, n_in, n_out), random_pmf(rng, n_in)
    assert e0_single(W, q, rho) == pytest.approx(direct_e0(W, q, rho), rel=1e-10, abs=1e-13)


def test_tiny_probabilities_stay_finite():
    W = np.array([[1 - 1e-320, 1e-320], [1e-320, 1 - 1e-320]])
    assert e0_single(W, [0.5, 0.5], 1.0) == pytest.approx(math.log(2), abs=1e-12)


def test_mac_subset_reduces_to_single():
    mac = DiscreteMac(bsc(0.1))
    q = InputDistribution.uniform((2,))
    assert e0_mac_subset(mac, q, (0,), 0.7) == pytest.approx(e0_single(bsc(0.1), q[0], 0.7), abs=1e-15)


def test_parallel_noiseless_subset(parallel_noiseless):
    mac, q = parallel_noiseless
    assert e0_mac_subset(mac, q, (0,), 1.0) == pytest.approx(math.log(2), abs=1e-14)
    assert e0_mac_subset(mac, q, (0, 1), 1.0) == pytest.approx(2 * math.log(2), abs=1e-14)


def brute_mac_subset(mac, q, S, rho):
    """Direct multi-sum of the subset exponent for a two-input MAC."""
    W = mac.transition
    Sc = [i for i in range(2) if i not in S]
    total = 0.0
    for xc in itertools.product(*[range(W.shape[i]) for i in Sc]):
        wc = np.prod([q[i][x] for i, x in zip(Sc, xc)]) if Sc else 1.0
        for y in range(W.shape[-1]):
            inner = 0.0
            for xs in itertools.product(*[range(W.shape[i]) for i in S]):
                x = [0, 0]
                for i, v in zip(S, xs):
                    x[i] = v
                for i, v in zip(Sc, xc):
                    x[i] = v
                inner += np.prod([q[i][v] for i, v in zip(S, xs)]) * W[x[0], x[1], y] ** (1 / (1 + rho))
            total += wc * inner ** (1 + rho)
    return -math.log(total)


@settings(max_examples=30, deadline=None)
@given(seeds, rhos)
def test_mac_subset_matches_brute_force(seed, rho):
    rng = np.random.default_rng(seed)
    mac = random_mac(rng, (2, 3), 3)
    q = InputDistribution((random_pmf(rng, 2), random_pmf(rng, 3)))
    for S in [(0,), (1,), (0, 1)]:
        assert e0_mac_subset(mac, q, S, rho) == pytest.approx(brute_mac_subset(mac, q, S, rho), rel=1e-10, abs=1e-13)


def test_independent_unit_schedule_is_marginal(adder):
    mac, q = adder
    W = effective_channel_independent(mac, q, (1, 0), 0)
    # class 1 idles on symbol 0, so the desired input sees y = x
    np.testing.assert_allclose(W, [[1, 0, 0], [0, 1, 0]])
    assert e0_independent(mac, q, (1, 0), 0, 1.0) == pytest.approx(e0_single(W, q[0], 1.0))


def test_independent_adder_pair_brute_force(adder):
    mac, q = adder
    W = np.zeros((2, 3))
    for x1, x2 in itertools.product(range(2), repeat=2):
        W[x1, x1 + x2] += 0.5
    assert e0_independent(mac, q, (1, 1), 0, 1.0) == pytest.approx(e0_single(W, [0.5, 0.5], 1.0), abs=1e-15)
    assert e0_independent(mac, q, (1, 1), 1, 1.0) == pytest.approx(e0_single(W, [0.5, 0.5], 1.0), abs=1e-15)


def test_independent_slots_of_one_class():
    # three binary slots of one class on a 3-input adder
    mac = DiscreteMac(adder_mac(3).transition, input_classes=(0, 0, 0))
    q = InputDistribution.uniform(mac.input_sizes)
    W = effective_channel_independent(mac, q, (2,), 0)
    expect = np.zeros((2, 4))
    for x, z in itertools.product(range(2), repeat=2):
        expect[x, x + z] += 0.5
    np.testing.assert_allclose(W, expect)
    with pytest.raises(ConfigError):
        effective_channel_independent(mac, q, (4,), 0)
    with pytest.raises(ConfigError):
        effective_channel_independent(mac, q, (0,), 0)


def test_gaussian_closed_forms():
    assert e0_gaussian_quantum(GaussianMacSpec((1.0,)), (1,), 0, 1.0) == pytest.approx(math.log(1.5), abs=1e-15)
    assert e0_gaussian_quantum(GaussianMacSpec((10.0,)), (4,), 0, 1.0) == pytest.approx(math.log(1 + 10 / 62), abs=1e-15)
    assert e0_gaussian_quantum(GaussianMacSpec((10.0,)), (4,), 0, 1.0) == pytest.approx(0.14953, abs=1e-5)
    with pytest.raises(ConfigError):
        e0_gaussian_quantum(GaussianMacSpec((1.0, 1.0)), (0, 1), 0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=3), st.data(), rhos)
def test_gaussian_subschedule_dominance(snr, data, rho):
    J = len(snr)
    s = tuple(data.draw(st.integers(0, 5)) for _ in range(J))
    j = data.draw(st.integers(0, J - 1))
    s = tuple(a if i != j else max(a, 1) for i, a in enumerate(s))
    sub = tuple(data.draw(st.integers(1 if i == j else 0, a)) for i, a in enumerate(s))
    spec = GaussianMacSpec(tuple(snr))
    assert e0_gaussian_quantum(spec, sub, j, rho) >= e0_gaussian_quantum(spec, s, j, rho) - 1e-15


@pytest.mark.parametrize("K", [64, 256, 1024, 4096])
def test_gaussian_saturation(K):
    for rho in (0.25, 1.0):
        value = K * e0_gaussian_quantum(GaussianMacSpec((1.0,)), (K,), 0, rho)
        assert abs(value - rho / (1 + rho)) < 2 / K


def test_dbc_single_receiver_is_single_user():
    spec = DegradedBroadcastSpec(bsc(0.1), (), (), np.array([0.3, 0.7]))
    assert e0_dbc(spec, 0, 0, 0.6) == pytest.approx(e0_single(bsc(0.1), [0.3, 0.7], 0.6), abs=1e-15)


def test_dbc_identity_degradation():
    spec = DegradedBroadcastSpec(bsc(0.05), (np.eye(2),), (bsc(0.2),), np.array([0.5, 0.5]))
    for k in (1,):
        assert e0_dbc(spec, k, 1, 1.0) == pytest.approx(e0_dbc(spec, k, 0, 1.0), abs=1e-15)


def test_dbc_cascade_double_sum():
    spec = cascade_dbc()
    # k = 1 (outer layer) at receiver 0: x1 ~ top, x0 | x1 ~ ladder, y0 | x0 ~ hop
    P = np.einsum("ab,bc->ac", spec.ladder[0], spec.first_hop)
    assert e0_dbc(spec, 1, 0, 1.0) == pytest.approx(direct_e0(P, spec.top, 1.0), abs=1e-14)
    # k = 0 at receiver 0: average over x1 outside the power
    total = 0.0
    for x1 in range(2):
        for y in range(2):
            inner = sum(spec.ladder[0][x1, x0] * spec.first_hop[x0, y] ** 0.5 for x0 in range(2))
            total += spec.top[x1] * inner**2
    assert e0_dbc(spec, 0, 0, 1.0) == pytest.approx(-math.log(total), abs=1e-14)
    with pytest.raises(ConfigError):
        e0_dbc(spec, 0, 1, 1.0)


def test_limits_match_information():
    assert e0_over_rho_limit(lambda r: e0_single(bsc(0.1), [0.5, 0.5], r)).value == pytest.approx(0.3680, abs=1e-4)
    mac = adder_mac()
    q = InputDistribution.uniform(mac.input_sizes)
    assert e0_over_rho_limit(lambda r: e0_mac_subset(mac, q, (0, 1), r)).value == pytest.approx(1.0397, abs=1e-4)
    est = e0_over_rho_limit(lambda r: e0_single(np.eye(2), [0.5, 0.5], r))
    assert est.value == pytest.approx(math.log(2), abs=1e-10)
    # E0 ~ rho carries ~1e-16 absolute rounding, so the ratio at rho=1e-6 is good to ~1e-10
    assert all(v == pytest.approx(math.log(2), abs=1e-9) for v in est.ratios)


def test_limit_flags_broken_exponent():
    with pytest.raises(NonConvergenceError):
        e0_over_rho_limit(lambda r: math.sqrt(r))
    with pytest.raises(NonConvergenceError):
        e0_over_rho_limit(lambda r: float("nan"))


def families(rng):
    W, q = random_channel(rng, 3, 3), random_pmf(rng, 3)
    mac = random_mac(rng, (2, 2), 3)
    Q = InputDistribution((random_pmf(rng, 2), random_pmf(rng, 2)))
    spec = random_dbc(rng, J=2, size=2)
    yield (lambda r: e0_single(W, q, r)), mutual_information(W, q)
    for S in [(0,), (1,), (0, 1)]:
        yield (lambda r, S=S: e0_mac_subset(mac, Q, S, r)), mac_conditional_mi(mac, Q, S)
    for k, j in [(0, 0), (1, 0), (1, 1)]:
        yield (lambda r, k=k, j=j: e0_dbc(spec, k, j, r)), dbc_conditional_mi(spec, k, j)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_ratio_non_increasing_and_below_information(seed):
    rng = np.random.default_rng(seed)
    for fn, info in families(rng):
        ratios = np.array([fn(r) / r for r in RHO_GRID])
        assert np.all(np.diff(ratios) <= 1e-12)
        assert np.all(ratios < info + 1e-10)
        assert np.all(ratios >= -1e-15)
