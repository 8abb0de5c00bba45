"""Slotted multiclass processor-sharing queue: dynamics, metrics, verdicts.

Each slot: read the state, apply the policy's schedule to the heads of the
queues, remove completed messages, then admit the slot's arrivals. A message
admitted in slot ``t`` and completed in slot ``t'`` has sojourn ``t' - t``.
"""

from __future__ import annotations

import bisect
import copy
import csv
import io
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._validation import NORM_TOL, ConfigError, check_positive_int, check_schedule
from .sched import (
    NONIDLING,
    STATE_INDEPENDENT,
    SUBCLASS,
    PolicySpec,
    choose_action,
    feasible_full,
)
from .service import BlockService, QuantumService

DONE_TOL = 1e-12
MAX_BATCH = 10**6
ARRIVAL_KINDS = ("poisson", "bernoulli", "deterministic")


@dataclass(frozen=True)
class ArrivalProcess:
    """I.i.d. batch arrivals for one class.

    ``deterministic`` with a ``pattern`` cycles the pattern; with only a
    ``rate`` it admits ``floor((t+1) rate) - floor(t rate)`` messages in slot
    ``t``.
    """

    kind: str = "poisson"
    rate: float = 0.0
    pattern: tuple = None

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ConfigError(f"unknown arrival kind {self.kind!r}")
        rate = float(self.rate)
        if not math.isfinite(rate) or rate < 0:
            raise ConfigError("arrival rate must be finite and >= 0")
        if self.kind == "bernoulli" and rate > 1:
            raise ConfigError("bernoulli arrival rate must be <= 1")
        if self.pattern is not None:
            if self.kind != "deterministic":
                raise ConfigError("only deterministic arrivals take a pattern")
            pat = tuple(int(a) for a in self.pattern)
            if not pat or min(pat) < 0:
                raise ConfigError("arrival pattern must be non-empty and non-negative")
            object.__setattr__(self, "pattern", pat)
            rate = sum(pat) / len(pat)
        object.__setattr__(self, "rate", rate)

    @property
    def mean(self):
        return self.rate

    def scaled(self, factor):
        if self.pattern is not None:
            raise ConfigError("a fixed arrival pattern cannot be rescaled")
        return ArrivalProcess(self.kind, self.rate * factor)

    def sample(self, rng, horizon):
        if self.kind == "poisson":
            out = rng.poisson(self.rate, horizon)
        elif self.kind == "bernoulli":
            out = (rng.random(horizon) < self.rate).astype(np.int64)
        elif self.pattern is not None:
            out = np.resize(np.asarray(self.pattern, dtype=np.int64), horizon)
        else:
            t = np.arange(horizon + 1, dtype=float)
            out = np.diff(np.floor(t * self.rate)).astype(np.int64)
        return np.minimum(np.asarray(out, dtype=np.int64), MAX_BATCH)

    def to_dict(self):
        out = {"kind": self.kind, "rate": self.rate}
        if self.pattern is not None:
            out = {"kind": self.kind, "pattern": list(self.pattern)}
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("arrival process must be an object")
        return cls(data.get("kind", "poisson"), data.get("rate", 0.0), data.get("pattern"))


@dataclass(frozen=True)
class ArrivalModel:
    """Per-class arrival processes plus, for block modes, subclass splitting.

    ``splitting[j]`` is a tuple of ``(schedule, mu)`` pairs summing to one.
    """

    processes: tuple
    splitting: tuple = None

    def __post_init__(self):
        procs = tuple(p if isinstance(p, ArrivalProcess) else ArrivalProcess.from_dict(p) for p in self.processes)
        if not procs:
            raise ConfigError("need at least one arrival process")
        object.__setattr__(self, "processes", procs)
        if self.splitting is not None:
            if len(self.splitting) != len(procs):
                raise ConfigError("splitting needs one vector per class")
            split = []
            for j, vec in enumerate(self.splitting):
                vec = tuple((check_schedule(s, n_classes=len(procs)), float(m)) for s, m in vec)
                if any(m < 0 for _, m in vec):
                    raise ConfigError("splitting probabilities must be >= 0")
                if any(m > 0 and s[j] == 0 for s, m in vec):
                    raise ConfigError(f"class {j} split onto a schedule that does not carry it")
                if vec and abs(math.fsum(m for _, m in vec) - 1.0) > NORM_TOL * max(1, len(vec)):
                    raise ConfigError(f"splitting vector of class {j} does not sum to 1")
                split.append(vec)
            object.__setattr__(self, "splitting", tuple(split))

    @property
    def n_classes(self):
        return len(self.processes)

    @property
    def means(self):
        return np.array([p.mean for p in self.processes])

    def scaled(self, factor):
        return ArrivalModel(tuple(p.scaled(factor) for p in self.processes), self.splitting)

    def with_splitting(self, splitting):
        return ArrivalModel(self.processes, splitting)


def proportional_splitting(policy, lengths, n_classes):
    """Splitting ``mu_{js} proportional to p(s) s_j / N(s)``."""
    out = []
    for j in range(n_classes):
        raw = [(s, float(w) * s[j] / lengths[s]) for s, w in policy.weights if w > 0 and s[j] > 0]
        total = math.fsum(v for _, v in raw)
        out.append(tuple((s, v / total) for s, v in raw) if total > 0 else ())
    return tuple(out)


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation run needs."""

    service: object
    policy: PolicySpec
    arrivals: ArrivalModel
    horizon: int = 200_000
    seed: int = 0
    replications: int = 8

    def __post_init__(self):
        check_positive_int(self.horizon, "horizon")
        check_positive_int(self.replications, "replications")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.horizon < 10 * self.service.K:
            raise ConfigError("horizon must be at least 10 K slots")
        J = self.service.n_classes
        if self.arrivals.n_classes != J:
            raise ConfigError("arrivals and service disagree on the number of classes")
        if any(len(s) != J for s, _ in self.policy.weights):
            raise ConfigError("policy schedules have the wrong length")
        if any(sum(s) > self.service.K for s, _ in self.policy.weights):
            raise ConfigError("policy uses a schedule with more than K messages")
        if isinstance(self.service, QuantumService):
            if self.policy.kind not in (NONIDLING, STATE_INDEPENDENT):
                raise ConfigError("independent decoding runs non-idling or state-independent policies")
            missing = [s for s in self.policy.support() if s not in self.service.quanta]
            if missing:
                raise ConfigError(f"no service quanta for schedules {missing}")
        elif isinstance(self.service, BlockService):
            if self.policy.kind != SUBCLASS:
                raise ConfigError("joint/dbc modes run the subclass state-independent policy")
            missing = [s for s in self.policy.support() if any(s) and s not in self.service.lengths]
            if missing:
                raise ConfigError(f"no codeword length for schedules {missing}")
            if self.arrivals.splitting is None:
                split = proportional_splitting(self.policy, self.service.lengths, J)
                object.__setattr__(self, "arrivals", self.arrivals.with_splitting(split))
            for j, vec in enumerate(self.arrivals.splitting):
                if self.arrivals.processes[j].mean > 0 and not vec:
                    raise ConfigError(f"class {j} has arrivals but no schedule carries it")
                if any(s not in self.service.lengths for s, m in vec if m > 0):
                    raise ConfigError(f"class {j} is split onto a schedule without a codeword length")
        else:
            raise ConfigError("unknown service model")

    @property
    def mode(self):
        return self.service.mode

    def scaled(self, factor):
        return SimConfig(self.service, self.policy, self.arrivals.scaled(factor), self.horizon, self.seed, self.replications)


# ---------------------------------------------------------------- state & step


@dataclass
class SystemState:
    """Queue contents. Entries are ``[residual, admission_slot]``.

    Independent mode keys queues by class ``j``; block modes by ``(j, s)``.
    """

    queues: dict = field(default_factory=dict)
    slot: int = 0

    def counts(self, n_classes):
        return tuple(len(self.queues.get(j, ())) for j in range(n_classes))

    def total(self):
        return sum(len(q) for q in self.queues.values())

    def work(self):
        return math.fsum(x for q in self.queues.values() for x, _ in q)

    def residuals(self):
        return {k: [x for x, _ in q] for k, q in self.queues.items()}


def step(state, policy, arrivals, service, rng=None, *, u=None):
    """Advance one slot and return ``(new_state, departures)``.

    Parameters
    ----------
    state : SystemState
    policy : PolicySpec
    arrivals : sequence
        Independent mode: batch size per class. Block modes: list of
        ``(j, s)`` subclass stamps of this slot's arrivals.
    service : QuantumService or BlockService
    rng : numpy.random.Generator, optional
        Source of the policy's uniform draw when ``u`` is not given.

    Returns
    -------
    new_state : SystemState
    departures : list of (class, sojourn)
    """
    new = copy.deepcopy(state)
    t = state.slot
    departures = []
    J = service.n_classes
    if isinstance(service, QuantumService):
        if policy.kind not in (NONIDLING, STATE_INDEPENDENT):
            raise ConfigError("policy kind does not match independent decoding")
        s = choose_action(policy, new.counts(J), rng, K=service.K, u=u, service=service.phi)
        if any(s):
            phi = service.phi(s)
            for j, k in enumerate(s):
                if k == 0:
                    continue
                queue = new.queues[j]
                for entry in queue[:k]:
                    entry[0] -= min(entry[0], phi[j])
                kept = []
                for i, entry in enumerate(queue):
                    if i < k and entry[0] <= DONE_TOL:
                        departures.append((j, t - entry[1]))
                    else:
                        kept.append(entry)
                new.queues[j] = kept
        for j, a in enumerate(arrivals):
            new.queues.setdefault(j, []).extend([service.requirements[j], t] for _ in range(int(a)))
    elif isinstance(service, BlockService):
        if policy.kind != SUBCLASS:
            raise ConfigError("policy kind does not match block decoding")
        action = choose_action(policy, new.residuals(), rng, u=u, codeword_lengths=service.lengths)
        for (j, s), count in action.items():
            queue = new.queues[(j, s)]
            for entry in queue[:count]:
                entry[0] -= 1
            departures.extend((j, t - e[1]) for e in queue[:count] if e[0] <= 0)
            new.queues[(j, s)] = [e for e in queue if e[0] > 0]
        for j, s in arrivals:
            new.queues.setdefault((j, tuple(s)), []).append([service.length(s), t])
    else:
        raise ConfigError("unknown service model")
    new.queues = {k: q for k, q in new.queues.items() if q}
    new.slot = t + 1
    return new, departures


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class StabilityVerdict:
    """Empirical stability label with the numbers it was based on."""

    label: str
    slope: float
    eps_up: float
    empty_visits: int
    mean_queue: float
    mean_queue_ci: tuple

    def to_dict(self):
        return {
            "label": self.label,
            "slope": self.slope,
            "eps_up": self.eps_up,
            "empty_visits_second_half": self.empty_visits,
            "mean_queue": self.mean_queue,
            "mean_queue_ci": list(self.mean_queue_ci),
        }


@dataclass
class SimReport:
    """One replication: per-slot series, sojourns and the stability verdict."""

    mode: str
    replication: int
    seed: int
    horizon: int
    n_series: np.ndarray
    work_series: np.ndarray
    sojourns: tuple
    arrived: tuple
    arrived_work: float
    verdict: StabilityVerdict = None

    @property
    def empty_visits(self):
        return int(np.count_nonzero(self.n_series == 0))

    def to_dict(self):
        soj = sojourn_stats(self)
        return {
            "mode": self.mode,
            "replication": self.replication,
            "seed": self.seed,
            "horizon": self.horizon,
            "arrivals": list(self.arrived),
            "departures": [int(a.size) for a in self.sojourns],
            "arrived_work_per_slot": self.arrived_work / self.horizon,
            "empty_visits": self.empty_visits,
            "mean_messages": float(np.mean(self.n_series)),
            "final_messages": int(self.n_series[-1]),
            "final_work": float(self.work_series[-1]),
            "sojourn": [s.to_dict() for s in soj],
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }

    def series_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["slot", "total_messages", "total_work"])
        for t, (n, w) in enumerate(zip(self.n_series.tolist(), self.work_series.tolist())):
            writer.writerow([t, n, repr(float(w))])
        return buf.getvalue()


def _batch_ci(values, n_batches=20, level=0.95):
    values = np.asarray(values, dtype=float)
    size = values.size // n_batches
    if size < 1:
        return (math.nan, math.nan)
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    half = stats.t.ppf(0.5 + level / 2, n_batches - 1) * means.std(ddof=1) / math.sqrt(n_batches)
    centre = float(values.mean())
    return (centre - float(half), centre + float(half))


def classify_stability(report, eps_up=None, min_empty_visits=1):
    """Label a run stable, unstable or inconclusive from its second half.

    The least-squares slope of total residual work over the second half is
    compared with ``eps_up`` (default 1% of the mean work arriving per slot).
    Unstable: slope above ``eps_up`` and the system never empties. Stable:
    ``|slope| < eps_up`` and at least ``min_empty_visits`` empty-state
    visits. Anything else is inconclusive.
    """
    work = np.asarray(report.work_series, dtype=float)
    counts = np.asarray(report.n_series)
    H = work.size
    half = H // 2
    y, n2 = work[half:], counts[half:]
    empties = int(np.count_nonzero(n2 == 0))
    mean_q = float(n2.mean()) if n2.size else 0.0
    ci = _batch_ci(n2) if n2.size >= 20 else (mean_q, mean_q)
    if eps_up is None:
        eps_up = 0.01 * report.arrived_work / H
    if not np.any(work) and not np.any(counts):
        return StabilityVerdict("stable", 0.0, float(eps_up), empties, mean_q, ci)
    x = np.arange(y.size, dtype=float)
    x -= x.mean()
    slope = float(np.dot(x, y - y.mean()) / np.dot(x, x)) if y.size > 1 else 0.0
    if slope > eps_up and empties == 0:
        label = "unstable"
    elif -eps_up < slope < eps_up and empties >= min_empty_visits:
        label = "stable"
    else:
        label = "inconclusive"
    return StabilityVerdict(label, slope, float(eps_up), empties, mean_q, ci)


@dataclass(frozen=True)
class SojournStats:
    """Per-class delay summary; ``flagged`` when too few departures."""

    cls: int
    count: int
    mean: float = None
    p50: float = None
    p90: float = None
    p99: float = None
    ci: tuple = None
    flagged: bool = False

    def to_dict(self):
        return {
            "class": self.cls,
            "count": self.count,
            "mean": self.mean,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "ci": list(self.ci) if self.ci else None,
            "flagged": self.flagged,
        }


def sojourn_stats(report, min_departures=100, n_batches=20):
    """Mean and percentiles of sojourn times per class with a batch-means CI."""
    out = []
    for j, soj in enumerate(report.sojourns):
        soj = np.asarray(soj, dtype=float)
        if soj.size < min_departures:
            out.append(SojournStats(j, int(soj.size), flagged=True))
            continue
        p50, p90, p99 = np.percentile(soj, [50, 90, 99])
        out.append(
            SojournStats(j, int(soj.size), float(soj.mean()), float(p50), float(p90), float(p99), _batch_ci(soj, n_batches))
        )
    return out


# ---------------------------------------------------------------- engines


@dataclass(frozen=True)
class Draws:
    """Pre-drawn randomness of one replication."""

    batches: tuple
    policy_u: np.ndarray
    split_u: tuple


def replication_seeds(seed, replications):
    return np.random.SeedSequence(int(seed)).spawn(replications)


def draw_randomness(config, seq):
    """Draw arrivals, policy uniforms and subclass uniforms from one replication seed."""
    # derived statelessly so repeated calls on one sequence agree
    arr_seq, pol_seq, split_seq = (
        np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (k,)) for k in range(3)
    )
    arr_rng = np.random.default_rng(arr_seq)
    H = config.horizon
    batches = tuple(p.sample(arr_rng, H) for p in config.arrivals.processes)
    policy_u = np.random.default_rng(pol_seq).random(H)
    split_rng = np.random.default_rng(split_seq)
    split_u = tuple(split_rng.random(int(b.sum())) for b in batches)
    return Draws(batches, policy_u, split_u)


def _cumulative(weights):
    cum = np.cumsum([float(w) for w in weights]).tolist()
    return cum, cum[-1] if cum else 0.0


def _pick_index(cum, total, u):
    return min(bisect.bisect_right(cum, u * total), len(cum) - 1)


def _independent_chooser(config):
    policy, service = config.policy, config.service
    K = service.K
    if policy.kind == STATE_INDEPENDENT:
        items = [s for s, _ in policy.weights]
        cum, total = _cumulative([w for _, w in policy.weights])

        def choose(counts, u):
            t = items[_pick_index(cum, total, u)]
            return tuple(a if a < n else n for a, n in zip(t, counts))

        return choose

    p = policy.distribution
    cache = {}

    def choose(counts, u):
        if sum(counts) < K:
            return counts
        key = tuple(n if n < K else K for n in counts)
        entry = cache.get(key)
        if entry is None:
            options = feasible_full(key, K)
            if policy.tie_break == "maxweight":
                scores = [sum(a * f for a, f in zip(s, service.phi(s))) for s in options]
                entry = ([options[int(np.argmax(scores))]], [1.0], 1.0)
            else:
                weights = [p.get(s, 0) for s in options]
                if not any(w > 0 for w in weights):
                    weights = [1] * len(options)
                entry = (options,) + _cumulative(weights)
            cache[key] = entry
        options, cum, total = entry
        if len(options) == 1:
            return options[0]
        return options[_pick_index(cum, total, u)]

    return choose


def _engine_independent(config, draws):
    service = config.service
    J, H = service.n_classes, config.horizon
    reqs = service.requirements
    choose = _independent_chooser(config)
    res = [deque() for _ in range(J)]
    born = [deque() for _ in range(J)]
    sojourns = [[] for _ in range(J)]
    n_series = np.empty(H, dtype=np.int64)
    work_series = np.empty(H, dtype=float)
    batches = [b.tolist() for b in draws.batches]
    policy_u = draws.policy_u.tolist()
    plans = {}
    work, n_total, arrived_work = 0.0, 0, 0.0
    for t in range(H):
        n_series[t] = n_total
        work_series[t] = work
        if n_total:
            s = choose(tuple(len(q) for q in res), policy_u[t])
            plan = plans.get(s)
            if plan is None:
                phi = service.phi(s)
                plan = plans[s] = [(j, k, phi[j]) for j, k in enumerate(s) if k]
            for j, k, f in plan:
                rq, bq = res[j], born[j]
                done = []
                for i in range(k):
                    x = rq[i]
                    if x - f <= DONE_TOL:
                        work -= x
                        done.append(i)
                    else:
                        rq[i] = x - f
                        work -= f
                if done:
                    for i in done:
                        sojourns[j].append(t - bq[i])
                    for i in reversed(done):
                        del rq[i]
                        del bq[i]
                    n_total -= len(done)
            if n_total == 0:
                work = 0.0
        for j in range(J):
            a = batches[j][t]
            if a:
                S = reqs[j]
                rq, bq = res[j], born[j]
                for _ in range(a):
                    rq.append(S)
                    bq.append(t)
                n_total += a
                work += a * S
                arrived_work += a * S
    return n_series, work_series, tuple(np.array(s, dtype=np.int64) for s in sojourns), arrived_work


def _engine_block(config, draws):
    service, policy = config.service, config.policy
    J, H = service.n_classes, config.horizon
    items = [s for s, _ in policy.weights]
    cum, total = _cumulative([w for _, w in policy.weights])
    index = {s: i for i, s in enumerate(items)}
    lengths = [service.lengths.get(s, 0) for s in items]
    plans = [[(j, k) for j, k in enumerate(s) if k] for s in items]
    subq = {}
    split_tables = []
    for j, vec in enumerate(config.arrivals.splitting):
        targets = [index[s] for s, m in vec if m > 0]
        c, tot = _cumulative([m for _, m in vec if m > 0])
        split_tables.append((targets, c, tot))
    left = [0] * len(items)
    members = [None] * len(items)
    sizes = [0] * len(items)
    sojourns = [[] for _ in range(J)]
    n_series = np.empty(H, dtype=np.int64)
    work_series = np.empty(H, dtype=np.int64)
    batches = [b.tolist() for b in draws.batches]
    policy_u = draws.policy_u.tolist()
    split_u = [u.tolist() for u in draws.split_u]
    split_pos = [0] * J
    work = n_total = arrived_work = 0
    for t in range(H):
        n_series[t] = n_total
        work_series[t] = work
        if n_total:
            i = _pick_index(cum, total, policy_u[t])
            if left[i]:
                left[i] -= 1
                work -= sizes[i]
                finished = left[i] == 0
            else:
                cohort = []
                for j, k in plans[i]:
                    q = subq.get((j, i))
                    c = min(k, len(q)) if q else 0
                    if c:
                        cohort.append((j, c))
                if cohort:
                    members[i] = cohort
                    sizes[i] = sum(c for _, c in cohort)
                    work -= sizes[i]
                    left[i] = lengths[i] - 1
                    finished = left[i] == 0
                else:
                    finished = False
            if finished:
                for j, c in members[i]:
                    q = subq[(j, i)]
                    for _ in range(c):
                        sojourns[j].append(t - q.popleft())
                n_total -= sizes[i]
                members[i], sizes[i] = None, 0
        for j in range(J):
            a = batches[j][t]
            if a:
                targets, c, tot = split_tables[j]
                us = split_u[j]
                pos = split_pos[j]
                for r in range(a):
                    i = targets[_pick_index(c, tot, us[pos + r])] if len(targets) > 1 else targets[0]
                    q = subq.get((j, i))
                    if q is None:
                        q = subq[(j, i)] = deque()
                    q.append(t)
                    work += lengths[i]
                    arrived_work += lengths[i]
                split_pos[j] = pos + a
                n_total += a
    return n_series, work_series.astype(float), tuple(np.array(s, dtype=np.int64) for s in sojourns), float(arrived_work)


def simulate_replication(config, replication, seq=None):
    """Run one replication and attach its verdict."""
    if seq is None:
        seq = replication_seeds(config.seed, config.replications)[replication]
    draws = draw_randomness(config, seq)
    engine = _engine_independent if isinstance(config.service, QuantumService) else _engine_block
    n_series, work_series, sojourns, arrived_work = engine(config, draws)
    report = SimReport(
        config.mode,
        replication,
        int(config.seed),
        config.horizon,
        n_series,
        work_series,
        sojourns,
        tuple(int(b.sum()) for b in draws.batches),
        arrived_work,
    )
    report.verdict = classify_stability(report)
    return report


def _replication_task(args):
    config, r, seq = args
    return simulate_replication(config, r, seq)


def run(config, n_jobs=1):
    """Run every replication of ``config``; results are ordered by replication.

    Replications are independent and may be spread over ``n_jobs`` worker
    processes without changing any output.
    """
    seqs = replication_seeds(config.seed, config.replications)
    tasks = [(config, r, seq) for r, seq in enumerate(seqs)]
    if n_jobs == 1 or config.replications == 1:
        return [_replication_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_replication_task, tasks))


def summarize(reports):
    """Aggregate verdict counts across replications."""
    labels = [r.verdict.label for r in reports]
    return {lab: labels.count(lab) for lab in ("stable", "unstable", "inconclusive")}
