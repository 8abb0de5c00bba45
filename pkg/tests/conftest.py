import numpy as np
import pytest
from hypothesis import strategies as st

from infoqueue.channel import DegradedBroadcastSpec, DiscreteMac, InputDistribution, adder_mac
from infoqueue.codelen import MessageClass


def bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


def random_channel(rng, n_in, n_out):
    W = rng.dirichlet(np.ones(n_out), size=n_in)
    return W


def random_pmf(rng, n):
    return rng.dirichlet(np.ones(n))


def random_mac(rng, sizes=(2, 2), n_out=3, signal=0.0):
    """Random MAC law; ``signal`` mixes in a random deterministic map to keep exponents sizeable."""
    shape = tuple(sizes) + (n_out,)
    rows = int(np.prod(sizes))
    W = rng.dirichlet(np.ones(n_out), size=rows)
    if signal:
        det = np.eye(n_out)[rng.integers(0, n_out, size=rows)]
        W = (1 - signal) * W + signal * det
    return DiscreteMac(W.reshape(shape))


def random_dbc(rng, J=2, size=2, signal=0.0):
    hop = (1 - signal) * random_channel(rng, size, size) + signal * np.eye(size)
    degs = [(1 - signal) * random_channel(rng, size, size) + signal * np.eye(size) for _ in range(J - 1)]
    ladder = [random_channel(rng, size, size) for _ in range(J - 1)]
    return DegradedBroadcastSpec(hop, tuple(degs), tuple(ladder), random_pmf(rng, size))


def cascade_dbc(p1=0.05, p2=0.1, ladder=0.2):
    return DegradedBroadcastSpec(bsc(p1), (bsc(p2),), (bsc(ladder),), np.array([0.5, 0.5]))


@pytest.fixture
def adder():
    mac = adder_mac()
    return mac, InputDistribution.uniform(mac.input_sizes)


@pytest.fixture
def parallel_noiseless():
    # y = (x1, x2) encoded as 2*x1 + x2
    W = np.zeros((2, 2, 4))
    for a in range(2):
        for b in range(2):
            W[a, b, 2 * a + b] = 1.0
    mac = DiscreteMac(W)
    return mac, InputDistribution.uniform(mac.input_sizes)


def scan(chi, target, limit=100000):
    for n in range(1, limit):
        if chi(n) <= target:
            return n
    raise AssertionError("scan did not terminate")


def random_joint_fixture(rng):
    sizes = tuple(int(v) for v in rng.integers(2, 4, size=2))
    mac = random_mac(rng, sizes, int(rng.integers(3, 6)), signal=0.6)
    q = InputDistribution(tuple(random_pmf(rng, n) for n in sizes))
    classes = [MessageClass(int(rng.integers(2, 64)), float(10 ** rng.uniform(-4, -1))) for _ in range(2)]
    s = tuple(int(v) for v in rng.integers(0, 4, size=2))
    if not any(s):
        s = (1, 0)
    rho = float(rng.uniform(0.1, 1.0))
    return mac, q, classes, s, rho


def random_dbc_fixture(rng):
    J = int(rng.integers(2, 4))
    spec = random_dbc(rng, J=J, size=2, signal=0.5)
    classes = [MessageClass(int(rng.integers(2, 16)), float(10 ** rng.uniform(-3, -1))) for _ in range(J)]
    s = tuple(int(v) for v in rng.integers(0, 3, size=J))
    if not any(s):
        s = (1,) + (0,) * (J - 1)
    return spec, classes, s, float(rng.uniform(0.2, 1.0))


seeds = st.integers(min_value=0, max_value=2**32 - 1)
rhos = st.floats(min_value=1e-3, max_value=1.0, allow_nan=False)


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda x: int(x.split()[0][2:])):
            terminalreporter.write_line(line)
