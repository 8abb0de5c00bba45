"""Command-line front end: scenario loading, computations, sweeps and simulation.

Exit codes: 0 success, 2 configuration error, 3 infeasible computation.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._validation import ConfigError, InfeasibleError, NonConvergenceError, check_schedule
from .channel import (
    DegradedBroadcastSpec,
    DiscreteMac,
    GaussianMacSpec,
    InputDistribution,
    channel_from_dict,
    dbc_conditional_mi,
    mac_conditional_mi,
)
from .codelen import (
    MessageClass,
    ceil_multiple_count,
    min_codeword_length_dbc,
    min_codeword_length_mac,
    service_requirement,
)
from .exponents import e0_dbc, e0_gaussian_quantum, e0_independent, e0_mac_subset, e0_over_rho_limit
from .qsim import ArrivalModel, ArrivalProcess, SimConfig, run, summarize
from .regions import (
    code_rate_vector,
    joint_region,
    nat_rates,
    nonidling_inner_bounds,
    outer_membership,
    rate_generators,
    state_independent_region,
    synthesize_policy,
    transience_scale,
)
from .sched import NONIDLING, STATE_INDEPENDENT, PolicySpec, enumerate_schedules
from .service import DBC, INDEPENDENT, JOINT, MODES, block_service, independent_service

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
SWEEP_AXES = ("K", "rho", "snr", "M")
SWEEP_FACTORS = (0.9, 1.1)


@dataclass(frozen=True)
class Scenario:
    """A validated scenario file."""

    mode: str
    channel: object
    classes: tuple
    rho: float
    K: int
    input_distribution: InputDistribution = None
    policy: PolicySpec = None
    arrivals: ArrivalModel = None
    rates: tuple = None
    schedule: tuple = None
    horizon: int = 200_000
    seed: int = 0
    replications: int = 8
    null_messages: bool = False
    sweep: dict = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        kinds = {INDEPENDENT: (GaussianMacSpec, DiscreteMac), JOINT: (DiscreteMac,), DBC: (DegradedBroadcastSpec,)}
        if not isinstance(self.channel, kinds[self.mode]):
            raise ConfigError(f"mode {self.mode!r} does not accept a {type(self.channel).__name__} channel")
        if self.channel.n_classes != len(self.classes):
            raise ConfigError("channel and classes disagree on the number of classes")
        if isinstance(self.channel, DiscreteMac) and self.input_distribution is None:
            object.__setattr__(self, "input_distribution", InputDistribution.uniform(self.channel.input_sizes))
        if self.policy is not None:
            block = self.mode != INDEPENDENT
            if block != (self.policy.kind not in (NONIDLING, STATE_INDEPENDENT)):
                raise ConfigError(f"policy kind {self.policy.kind!r} does not fit mode {self.mode!r}")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", check_schedule(self.schedule, len(self.classes), self.K))

    @property
    def n_classes(self):
        return len(self.classes)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        for key in ("mode", "channel", "classes"):
            if key not in data:
                raise ConfigError(f"scenario is missing {key!r}")
        classes = tuple(MessageClass.from_dict(c) for c in data["classes"])
        channel = channel_from_dict(data["channel"])
        q = data.get("input_distribution")
        arrivals = None
        if "arrivals" in data:
            arrivals = ArrivalModel(tuple(ArrivalProcess.from_dict(a) for a in data["arrivals"]))
        policy = PolicySpec.from_dict(data["policy"]) if "policy" in data else None
        try:
            return cls(
                mode=data["mode"],
                channel=channel,
                classes=classes,
                rho=float(data.get("rho", 1.0)),
                K=int(data.get("K", 1)),
                input_distribution=InputDistribution.from_dict(q) if q is not None else None,
                policy=policy,
                arrivals=arrivals,
                rates=tuple(float(r) for r in data["rates"]) if "rates" in data else None,
                schedule=tuple(data["schedule"]) if "schedule" in data else None,
                horizon=int(data.get("horizon", 200_000)),
                seed=int(data.get("seed", 0)),
                replications=int(data.get("replications", 8)),
                null_messages=bool(data.get("null_messages", False)),
                sweep=data.get("sweep"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad scenario field: {exc}") from exc

    def service(self, schedules=None):
        if self.mode == INDEPENDENT:
            return independent_service(self.channel, self.classes, self.K, self.rho, self.input_distribution)
        if schedules is None:
            schedules = enumerate_schedules(self.n_classes, self.K)
        return block_service(
            self.mode, self.channel, self.classes, schedules, self.K, self.rho, self.input_distribution, self.null_messages
        )

    def default_schedule(self):
        if self.schedule is not None:
            return self.schedule
        s = [1] * self.n_classes
        while sum(s) > self.K:
            s[max(i for i, a in enumerate(s) if a)] = 0
        return tuple(s)


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    return Scenario.from_dict(data)


def _subset_label(S):
    return [int(j) for j in S]


# ---------------------------------------------------------------- commands


def cmd_exponent(sc, args):
    """Exponents of the scenario's schedule, with their small-``rho`` limits for discrete channels."""
    s = sc.default_schedule()
    out = {"mode": sc.mode, "rho": sc.rho, "schedule": list(s), "exponents": []}
    rows = out["exponents"]
    if sc.mode == INDEPENDENT:
        for j in range(sc.n_classes):
            if not s[j]:
                continue
            if isinstance(sc.channel, GaussianMacSpec):
                rows.append({"class": j, "value": e0_gaussian_quantum(sc.channel, s, j, sc.rho)})
            else:
                mac, q = sc.channel, sc.input_distribution
                lim = e0_over_rho_limit(lambda r, j=j: e0_independent(mac, q, s, j, r))
                rows.append({"class": j, "value": e0_independent(mac, q, s, j, sc.rho), "limit": lim.value,
                             "limit_tolerance": lim.tolerance})
    elif sc.mode == JOINT:
        mac, q = sc.channel, sc.input_distribution
        active = [j for j in range(sc.n_classes) if s[j]]
        for size in range(1, len(active) + 1):
            for S in itertools.combinations(active, size):
                lim = e0_over_rho_limit(lambda r, S=S: e0_mac_subset(mac, q, S, r))
                rows.append({"subset": _subset_label(S), "value": e0_mac_subset(mac, q, S, sc.rho),
                             "limit": lim.value, "limit_tolerance": lim.tolerance,
                             "mutual_information": mac_conditional_mi(mac, q, S)})
    else:
        spec = sc.channel
        for j in range(spec.n_receivers):
            for k in range(j, spec.n_receivers):
                lim = e0_over_rho_limit(lambda r, k=k, j=j: e0_dbc(spec, k, j, r))
                rows.append({"layer": k, "receiver": j, "value": e0_dbc(spec, k, j, sc.rho), "limit": lim.value,
                             "limit_tolerance": lim.tolerance, "mutual_information": dbc_conditional_mi(spec, k, j)})
    return out


def cmd_codelen(sc, args):
    """Service requirements, or codeword lengths with their brackets and certificates."""
    schedules = [sc.schedule] if sc.schedule is not None else [s for s in enumerate_schedules(sc.n_classes, sc.K) if any(s)]
    out = {"mode": sc.mode, "rho": sc.rho, "requirements": [service_requirement(c, sc.rho) for c in sc.classes]}
    rows = []
    for s in schedules:
        if sc.mode == INDEPENDENT:
            svc = independent_service(sc.channel, sc.classes, sc.K, sc.rho, sc.input_distribution)
            phi = svc.phi(s)
            rows.append({"schedule": list(s), "quanta": list(phi),
                         "slots": [ceil_multiple_count(svc.requirements[j], phi[j]) if s[j] else None
                                   for j in range(sc.n_classes)]})
        elif sc.mode == JOINT:
            res = min_codeword_length_mac(sc.channel, sc.input_distribution, sc.classes, s, sc.rho)
            rows.append({"schedule": list(s), **res.to_dict(),
                         "code_rates": code_rate_vector(sc.classes, s, res.n).tolist()})
        else:
            res = min_codeword_length_dbc(sc.channel, sc.classes, s, sc.rho, sc.null_messages)
            rows.append({"schedule": list(s), **res.to_dict(),
                         "code_rates": code_rate_vector(sc.classes, s, res.n).tolist()})
    if len(rows) == 1:
        out.update(rows[0])
    else:
        out["schedules"] = rows
    return out


def _rates_of(sc):
    if sc.rates is not None:
        rates = np.array(sc.rates)
    elif sc.arrivals is not None:
        rates = sc.arrivals.means
    else:
        raise ConfigError("region needs 'rates' or 'arrivals' in the scenario")
    if rates.size != sc.n_classes or np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ConfigError("rates must be one finite non-negative value per class")
    return rates


def cmd_region(sc, args):
    """Classify the scenario's arrival-rate vector against every applicable bound."""
    rates = _rates_of(sc)
    svc = sc.service()
    out = {"mode": sc.mode, "rates": rates.tolist(), "nat_rates": nat_rates(rates, sc.classes).tolist()}
    if sc.mode == INDEPENDENT:
        bounds = nonidling_inner_bounds(svc)
        stable = bool(bounds.holds(rates))
        tscale = transience_scale(svc, rates) if np.any(rates > 0) else math.inf
        out["nonidling"] = {
            "slot_condition": bool(bounds.slot_condition(rates)),
            "work_condition": bool(bounds.work_condition(rates)),
            "stability_scale": _finite(bounds.scale_limit(rates)) if np.any(rates > 0) else None,
            "transience_scale": _finite(tscale),
        }
        verdict = "stable" if stable else ("unstable" if tscale <= 1.0 else "undetermined")
        if sc.policy is not None and sc.policy.kind == STATE_INDEPENDENT:
            thr = state_independent_region(svc, sc.policy)
            out["state_independent"] = {"thresholds": thr.tolist(), "stable": bool(np.all(rates < thr) or not np.any(rates))}
        member = outer_membership(rates, rate_generators(svc))
        out["outer"] = member.to_dict()
        if not member.inside:
            verdict = "unstable"
        out["verdict"] = verdict
        out["inside"] = member.inside
        return out
    member = outer_membership(rates, rate_generators(svc))
    out.update(member.to_dict())
    out["verdict"] = "stable" if member.strict else ("unstable" if not member.inside else "boundary")
    if sc.policy is not None:
        region = joint_region(svc, sc.policy)
        out["policy_thresholds"] = region.per_class.tolist()
        out["policy_stable"] = region.stable(rates)
    if member.strict and np.any(rates > 0):
        syn = synthesize_policy(rates, svc)
        out["policy"] = syn.policy.to_dict()
        out["splitting"] = [[{"s": list(s), "mu": m} for s, m in vec] for vec in syn.splitting]
        out["slack"] = syn.slack.tolist()
    return out


def _finite(x):
    return x if math.isfinite(x) else None


def _sim_config(sc, svc, arrivals=None, policy=None):
    arrivals = arrivals or sc.arrivals
    if arrivals is None:
        raise ConfigError("simulate needs 'arrivals' in the scenario")
    policy = policy or sc.policy
    if policy is None:
        if sc.mode == INDEPENDENT:
            policy = PolicySpec(NONIDLING)
        else:
            syn = synthesize_policy(arrivals.means, svc)
            policy = syn.policy
            if arrivals.splitting is None:
                arrivals = arrivals.with_splitting(syn.splitting)
    return SimConfig(svc, policy, arrivals, sc.horizon, sc.seed, sc.replications)


def _block_schedules(sc, policy):
    if policy is None:
        return None
    return [s for s in policy.support() if any(s)]


def cmd_simulate(sc, args):
    """Simulate the scenario; returns the JSON report and the CSV series of one replication."""
    svc = sc.service(_block_schedules(sc, sc.policy) if sc.mode != INDEPENDENT else None)
    config = _sim_config(sc, svc)
    reports = run(config, n_jobs=args.jobs)
    out = {
        "mode": sc.mode,
        "seed": sc.seed,
        "horizon": sc.horizon,
        "policy": config.policy.to_dict(),
        "arrival_rates": config.arrivals.means.tolist(),
        "summary": summarize(reports),
        "replications": [r.to_dict() for r in reports],
    }
    series = None
    if args.series:
        idx = args.series_replication
        if not 0 <= idx < len(reports):
            raise ConfigError("series replication index out of range")
        series = reports[idx].series_csv()
    return out, series


# ---------------------------------------------------------------- sweep


def _with_axis(sc, axis, value):
    if axis == "K":
        return replace(sc, K=int(value))
    if axis == "rho":
        return replace(sc, rho=float(value))
    if axis == "snr":
        if not isinstance(sc.channel, GaussianMacSpec):
            raise ConfigError("snr sweeps need a gaussian_mac channel")
        classes = tuple(replace(c, snr=float(value)) for c in sc.classes)
        return replace(sc, channel=GaussianMacSpec(tuple(float(value) for _ in sc.classes)), classes=classes)
    if axis == "M":
        return replace(sc, classes=tuple(replace(c, alphabet_size=2 ** int(value)) for c in sc.classes))
    raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")


def sweep_point(sc, axis, value, direction, simulate):
    """Inner and outer scalar thresholds along ``direction`` at one axis value."""
    sc = _with_axis(sc, axis, value)
    svc = sc.service()
    d = np.asarray(direction, dtype=float)
    if sc.mode == INDEPENDENT:
        inner = nonidling_inner_bounds(svc).scale_limit(d)
        outer = transience_scale(svc, d)
    else:
        gauge = outer_membership(d, rate_generators(svc)).gauge
        inner = outer = 1.0 / gauge if gauge > 0 else math.inf
    nat = float(np.dot(d, [c.log_alphabet for c in sc.classes]))
    row = {axis: value, "inner_threshold": inner, "outer_threshold": outer,
           "nat_inner_threshold": inner * nat, "nat_outer_threshold": outer * nat}
    if simulate:
        for f in SWEEP_FACTORS:
            arrivals = ArrivalModel(tuple(ArrivalProcess("poisson", f * inner * x) for x in d))
            config = _sim_config(sc, svc, arrivals)
            counts = summarize(run(config))
            row[f"sim_{f}x"] = max(counts, key=lambda k: (counts[k], k))
    return row


def _sweep_task(args):
    return sweep_point(*args)


def cmd_sweep(sc, args):
    """CSV of thresholds over one axis; rows are ordered by the axis."""
    spec = dict(sc.sweep or {})
    axis = args.axis or spec.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    values = args.values or spec.get("values")
    if not values:
        raise ConfigError("sweep needs axis values ('sweep.values' or --values)")
    values = sorted(int(v) if axis in ("K", "M") else float(v) for v in values)
    direction = spec.get("direction", [1.0] * sc.n_classes)
    if len(direction) != sc.n_classes or min(direction) < 0 or max(direction) <= 0:
        raise ConfigError("sweep direction must be non-negative, non-zero, one entry per class")
    simulate = bool(args.simulate or spec.get("simulate", False))
    tasks = [(sc, axis, v, direction, simulate) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    return sweep_csv(rows, axis, simulate)


def sweep_csv(rows, axis, simulate=False):
    cols = [axis, "inner_threshold", "outer_threshold", "nat_inner_threshold", "nat_outer_threshold"]
    if simulate:
        cols += [f"sim_{f}x" for f in SWEEP_FACTORS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "inf"
    return str(x)


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="infoqueue", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, metavar="FILE", help="scenario JSON file")
        p.add_argument("--out", metavar="FILE", help="write output here instead of stdout")
        p.add_argument("--seed", type=_u64, help="override the scenario seed")
        p.add_argument("--replications", type=int, metavar="N", help="override the replication count")
        p.add_argument("--horizon", type=int, metavar="N", help="override the horizon in slots")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
        return p

    common(sub.add_parser("exponent", help="error exponents of a schedule"))
    common(sub.add_parser("codelen", help="service requirements and codeword lengths"))
    common(sub.add_parser("region", help="stability classification of an arrival-rate vector"))
    p = common(sub.add_parser("simulate", help="simulate the queue"))
    p.add_argument("--series", metavar="FILE", help="CSV time series of one replication")
    p.add_argument("--series-replication", type=int, default=0, metavar="R")
    p = common(sub.add_parser("sweep", help="threshold sweep as CSV"))
    p.add_argument("--axis", choices=SWEEP_AXES)
    p.add_argument("--values", nargs="+", type=float, metavar="V")
    p.add_argument("--simulate", action="store_true", help="add simulated verdicts at 0.9x and 1.1x")
    return parser


def _u64(text):
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("seed must be an integer") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _apply_overrides(sc, args):
    changes = {}
    for name in ("seed", "replications", "horizon"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    return replace(sc, **changes) if changes else sc


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


COMMANDS = {"exponent": cmd_exponent, "codelen": cmd_codelen, "region": cmd_region}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        sc = _apply_overrides(load_scenario(args.scenario), args)
        if args.command == "simulate":
            report, series = cmd_simulate(sc, args)
            _emit(_dumps(_clean(report)), args.out)
            if series is not None:
                _emit(series, args.series)
        elif args.command == "sweep":
            _emit(cmd_sweep(sc, args), args.out)
        else:
            _emit(_dumps(_clean(COMMANDS[args.command](sc, args))), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, NonConvergenceError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
