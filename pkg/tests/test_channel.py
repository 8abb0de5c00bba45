import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import bsc, cascade_dbc, random_dbc, random_pmf, seeds
from infoqueue._validation import ConfigError
from infoqueue.channel import (
    DegradedBroadcastSpec,
    DiscreteMac,
    GaussianMacSpec,
    InputDistribution,
    channel_from_dict,
    dbc_conditional_mi,
    dbc_effective_channel,
    dbc_rate_constraints,
    mac_conditional_mi,
    mac_pentagon,
    mutual_information,
)


def entropy(p):
    p = np.asarray(p)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def test_noiseless_binary_mi():
    assert mutual_information(np.eye(2), [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


def test_useless_channel_mi():
    assert mutual_information(bsc(0.5), [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)


def test_bsc_mi_matches_binary_entropy():
    hb = -(0.1 * math.log(0.1) + 0.9 * math.log(0.9))
    assert mutual_information(bsc(0.1), [0.5, 0.5]) == pytest.approx(math.log(2) - hb, abs=1e-14)
    assert mutual_information(bsc(0.1), [0.5, 0.5]) == pytest.approx(0.3680, abs=1e-4)


def test_mi_rejects_bad_input():
    with pytest.raises(ConfigError):
        mutual_information(bsc(0.1), [0.5, 0.6])
    with pytest.raises(ConfigError):
        mutual_information(bsc(0.1), [1.0, 0.0, 0.0])
    with pytest.raises(ConfigError):
        mutual_information(np.array([[0.5, 0.6], [0.5, 0.5]]), [0.5, 0.5])


def test_parallel_noiseless_conditional_mi(parallel_noiseless):
    mac, q = parallel_noiseless
    assert mac_conditional_mi(mac, q, (0,)) == pytest.approx(math.log(2), abs=1e-14)
    assert mac_conditional_mi(mac, q, (1,)) == pytest.approx(math.log(2), abs=1e-14)
    assert mac_conditional_mi(mac, q, (0, 1)) == pytest.approx(2 * math.log(2), abs=1e-14)


def brute_force_adder_sum_mi():
    # I(X1,X2;Y) = H(Y) for a deterministic channel
    counts = {}
    for a, b in itertools.product(range(2), repeat=2):
        counts[a + b] = counts.get(a + b, 0) + 0.25
    return entropy(list(counts.values()))


def test_adder_channel_sum_mi(adder):
    mac, q = adder
    value = mac_conditional_mi(mac, q, (0, 1))
    assert value == pytest.approx(brute_force_adder_sum_mi(), abs=1e-14)
    assert value == pytest.approx(1.5 * math.log(2), abs=1e-14)


def test_empty_subset_rejected(adder):
    mac, q = adder
    with pytest.raises(ConfigError):
        mac_conditional_mi(mac, q, ())


def test_pentagons(adder, parallel_noiseless):
    mac, q = adder
    pent = mac_pentagon(mac, q)
    assert pent.labels == ((0,), (1,), (0, 1))
    np.testing.assert_allclose(pent.b, [math.log(2), math.log(2), 1.5 * math.log(2)], atol=1e-14)
    box = mac_pentagon(*parallel_noiseless)
    np.testing.assert_allclose(box.b, [math.log(2), math.log(2), 2 * math.log(2)], atol=1e-14)
    single = mac_pentagon(DiscreteMac(bsc(0.1)), InputDistribution.uniform((2,)))
    assert single.b.shape == (1,)
    assert single.b[0] == pytest.approx(mutual_information(bsc(0.1), [0.5, 0.5]))


def test_strict_membership_semantics(adder):
    pent = mac_pentagon(*adder)
    assert pent.contains([0.1, 0.0], strict=True)
    assert not pent.contains([math.log(2), 0.0], strict=True)
    assert pent.contains([math.log(2), 0.0])
    assert not pent.contains([-0.1, 0.1])


def test_deterministic_mac_full_set_equals_output_entropy():
    rng = np.random.default_rng(5)
    for _ in range(10):
        table = rng.integers(0, 4, size=(3, 2))
        W = np.zeros((3, 2, 4))
        for a in range(3):
            for b in range(2):
                W[a, b, table[a, b]] = 1.0
        q = InputDistribution((random_pmf(rng, 3), random_pmf(rng, 2)))
        py = np.einsum("a,b,aby->y", q[0], q[1], W)
        assert mac_conditional_mi(DiscreteMac(W), q, (0, 1)) == pytest.approx(entropy(py), abs=1e-12)


def test_dbc_effective_single_receiver():
    spec = DegradedBroadcastSpec(bsc(0.1), (), (), np.array([0.5, 0.5]))
    np.testing.assert_array_equal(dbc_effective_channel(spec, 0, 0), bsc(0.1))


def test_dbc_identity_degradation():
    spec = DegradedBroadcastSpec(bsc(0.05), (np.eye(2),), (bsc(0.2),), np.array([0.5, 0.5]))
    np.testing.assert_allclose(dbc_effective_channel(spec, 1, 1), dbc_effective_channel(spec, 1, 0), atol=1e-15)
    b = dbc_rate_constraints(spec).b
    assert b[1] == pytest.approx(mutual_information(dbc_effective_channel(spec, 1, 0), [0.5, 0.5]))


def brute_effective(spec, k, j):
    """p(y_j | x_k) by summing every hidden variable of the two-layer cascade."""
    hop, deg, lad = spec.first_hop, spec.degradations[0], spec.ladder[0]
    out = np.zeros((2, 2))
    for xk in range(2):
        for x0, y0, y1 in itertools.product(range(2), repeat=3):
            px0 = 1.0 if k == 0 and x0 == xk else (lad[xk, x0] if k == 1 else 0.0)
            path = px0 * hop[x0, y0] * (deg[y0, y1] if j == 1 else 1.0)
            out[xk, y1 if j == 1 else y0] += path if j == 1 else path / 2
    return out


def test_dbc_cascade_matches_exhaustive_sum():
    spec = cascade_dbc()
    for k, j in [(0, 0), (1, 0), (1, 1)]:
        np.testing.assert_allclose(dbc_effective_channel(spec, k, j), brute_effective(spec, k, j), atol=1e-15)
    # receiver 0, layer 0 reproduces the first hop (nothing marginalised)
    np.testing.assert_allclose(dbc_effective_channel(spec, 0, 0), bsc(0.05))


def test_dbc_cascade_rate_bounds_exhaustive():
    spec = cascade_dbc()
    hop, deg, lad, top = spec.first_hop, spec.degradations[0], spec.ladder[0], spec.top
    # joint p(x1, x0, y0, y1)
    joint = np.einsum("a,ab,bc,cd->abcd", top, lad, hop, deg)

    def cond_mi(pxyz):  # I(X;Y|Z) with axes (z, x, y)
        total = 0.0
        for z in range(pxyz.shape[0]):
            pz = pxyz[z].sum()
            if pz > 0:
                total += pz * mutual_information(pxyz[z] / pxyz[z].sum(axis=1, keepdims=True), pxyz[z].sum(axis=1) / pz)
        return total

    r0 = cond_mi(joint.sum(axis=3))  # I(X0;Y0|X1)
    p_x1_y1 = joint.sum(axis=(1, 2))
    r1 = mutual_information(p_x1_y1 / p_x1_y1.sum(axis=1, keepdims=True), top)
    np.testing.assert_allclose(dbc_rate_constraints(spec).b, [r0, r1], atol=1e-13)


def test_dbc_rejects_inner_layer_request():
    with pytest.raises(ConfigError):
        dbc_effective_channel(cascade_dbc(), 0, 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_data_processing_order(seed):
    rng = np.random.default_rng(seed)
    spec = random_dbc(rng, J=3, size=3)
    for k in range(3):
        values = [dbc_conditional_mi(spec, k, j) for j in range(k + 1)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert np.all(np.isfinite(dbc_rate_constraints(spec).b))
    assert np.all(dbc_rate_constraints(spec).b >= 0)


def test_normalisation_tolerance():
    with pytest.raises(ConfigError):
        DiscreteMac(np.array([[0.5, 0.5 + 1e-9], [0.5, 0.5]]))
    DiscreteMac(np.array([[0.5, 0.5 + 1e-13], [0.5, 0.5]]))


@pytest.mark.parametrize("factory", ["mac", "dbc", "gauss"])
def test_json_round_trip(factory):
    rng = np.random.default_rng(1)
    if factory == "mac":
        obj = DiscreteMac(rng.dirichlet(np.ones(3), size=6).reshape(2, 3, 3))
    elif factory == "dbc":
        obj = random_dbc(rng, J=3, size=2)
    else:
        obj = GaussianMacSpec((1.0, 10.0))
    back = channel_from_dict(json.loads(json.dumps(obj.to_dict())))
    for a, b in zip(json.dumps(obj.to_dict()), json.dumps(back.to_dict())):
        assert a == b


def test_unknown_kind():
    with pytest.raises(ConfigError):
        channel_from_dict({"kind": "nope"})
    with pytest.raises(ConfigError):
        GaussianMacSpec((0.0,))
