"""Scenario configuration, trace replay, metrics, and CSV reporting.

The harness turns a declarative ``ScenarioConfig`` into a simulator run:
it creates the cgroups, attaches policies, replays the workload's event
stream page by page, and collects per-cgroup ``Metrics``. ``compare`` runs
the same stream under several policies, and ``scenario_isolation`` replays
two interleaved workloads under the four policy assignments of a
two-tenant experiment.

Hit ratios are the reported quantity; absolute throughput and latency are
hardware-bound and out of scope. Reports are CSV with one row per
(policy, cgroup) and a stable column order. Replay wall time is kept on
the ``Metrics`` object but not serialized, so reruns of the same seed
produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, fields as dataclass_fields

from .core import PAGE_SIZE, AccessOutcome, Simulator
from .policies import POLICY_NAMES, make_policy
from .policy_api import CANDIDATES_MAX
from .workloads import (
    Op,
    TraceEvent,
    gen_filesearch,
    gen_getscan,
    gen_ycsb,
    parse_trace,
)


class ConfigError(ValueError):
    """Scenario validation failed; the message lists every problem found."""


class ReplayError(RuntimeError):
    """Replay aborted; the message names the failing event."""


@dataclass
class Metrics:
    """Per-cgroup outcome of one run. ``*_hit_ratio`` fields are None when
    the cgroup saw no accesses of that kind. ``replay_seconds`` covers the
    whole run and is excluded from CSV output."""

    cgroup: int
    accesses: int
    hits: int
    misses: int
    hit_ratio: float
    get_hit_ratio: float | None
    scan_hit_ratio: float | None
    read_hit_ratio: float | None
    write_hit_ratio: float | None
    evictions_policy: int
    evictions_fallback: int
    invalid_candidates: int
    refault_activations: int
    writebacks: int
    file_removed_folios: int
    replay_seconds: float


CSV_COLUMNS = ("policy",) + tuple(
    f.name for f in dataclass_fields(Metrics) if f.name != "replay_seconds")


@dataclass
class CgroupSpec:
    """One tenant: id, memory limit in bytes (multiple of 4096), policy
    name, and policy parameters."""

    id: int
    limit_bytes: int
    policy: str = "default"
    params: dict = field(default_factory=dict)

    @property
    def limit_pages(self) -> int:
        return self.limit_bytes // PAGE_SIZE


@dataclass
class WorkloadSpec:
    """A named generator plus its parameters, or kind="trace" with a
    ``path`` parameter. The harness seed is used unless the parameters
    carry their own."""

    kind: str
    params: dict = field(default_factory=dict)


WORKLOAD_KINDS = ("ycsb-a", "ycsb-c", "uniform", "uniform-rw",
                  "filesearch", "getscan", "trace")

_YCSB_VARIANTS = {"ycsb-a": "A", "ycsb-c": "C", "uniform": "Uniform",
                  "uniform-rw": "UniformRW"}


def build_events(spec: WorkloadSpec, seed: int):
    """Instantiate a workload's event iterator. Parameter problems raise
    ValueError/TypeError here, not at first consumption."""
    params = dict(spec.params)
    params.setdefault("seed", seed)
    if spec.kind in _YCSB_VARIANTS:
        params.setdefault("value_size", 1024)
        return gen_ycsb(_YCSB_VARIANTS[spec.kind], **params)
    if spec.kind == "filesearch":
        return gen_filesearch(**params)
    if spec.kind == "getscan":
        return gen_getscan(**params)
    if spec.kind == "trace":
        params.pop("seed", None)
        return parse_trace(**params)
    raise ValueError("unknown workload kind %r (expected one of %s)"
                     % (spec.kind, ", ".join(WORKLOAD_KINDS)))


@dataclass
class ScenarioConfig:
    cgroups: list[CgroupSpec] = field(default_factory=list)
    workload: WorkloadSpec | None = None
    seed: int = 0
    candidates: int = CANDIDATES_MAX
    scan_window: int = 512
    report_path: str | None = None

    def validate(self) -> list[str]:
        """Collect every configuration problem instead of stopping at the
        first one."""
        errors = []
        if not self.cgroups:
            errors.append("at least one cgroup is required")
        seen = set()
        for spec in self.cgroups:
            label = "cgroup %r" % (spec.id,)
            if spec.id in seen:
                errors.append("%s: duplicate id" % label)
            seen.add(spec.id)
            if spec.limit_bytes <= 0:
                errors.append("%s: limit_bytes must be positive" % label)
            elif spec.limit_bytes % PAGE_SIZE:
                errors.append("%s: limit_bytes must be a multiple of %d"
                              % (label, PAGE_SIZE))
            if spec.policy not in POLICY_NAMES:
                errors.append("%s: unknown policy %r" % (label, spec.policy))
            else:
                try:
                    make_policy(spec.policy, spec.params, self.scan_window)
                except (TypeError, ValueError) as exc:
                    errors.append("%s: %s" % (label, exc))
        if not 1 <= self.candidates <= CANDIDATES_MAX:
            errors.append("candidates must be in 1..=%d" % CANDIDATES_MAX)
        if self.scan_window < self.candidates:
            errors.append("scan_window must be >= candidates")
        if self.workload is None:
            errors.append("a workload is required")
        else:
            try:
                build_events(self.workload, self.seed)
            except (TypeError, ValueError, OSError) as exc:
                errors.append("workload: %s" % exc)
        return errors


@dataclass
class Report:
    """Rows of (policy label, Metrics) sharing the CSV schema."""

    rows: list

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for label, m in self.rows:
            writer.writerow([label] + [_cell(getattr(m, col))
                                       for col in CSV_COLUMNS[1:]])
        return out.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def metrics(self, cgroup: int, label: str | None = None) -> Metrics:
        for row_label, m in self.rows:
            if m.cgroup == cgroup and (label is None or row_label == label):
                return m
        raise KeyError((label, cgroup))


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.6f" % value
    return value


def _ratio(hits, accesses):
    return None if accesses == 0 else hits / accesses


def replay(sim: Simulator, events) -> dict:
    """Feed events through the simulator, expanding byte ranges to page
    accesses. Returns per-(cgroup, op) [accesses, hits] tallies. Policies
    get their deferred-work slot after every event."""
    tallies: dict = {}
    hit = AccessOutcome.HIT
    for ev in events:
        try:
            if ev.op is Op.DELETE:
                sim.remove_file(ev.cgroup, ev.file)
            else:
                write = ev.op is Op.WRITE
                accesses = 0
                hits = 0
                for page in ev.page_range():
                    if sim.access_page(ev.cgroup, ev.file, page, write,
                                       ev.thread) is hit:
                        hits += 1
                    accesses += 1
                t = tallies.get((ev.cgroup, ev.op))
                if t is None:
                    t = tallies[(ev.cgroup, ev.op)] = [0, 0]
                t[0] += accesses
                t[1] += hits
        except Exception as exc:
            raise ReplayError("event seq %d failed: %s" % (ev.seq, exc)) from exc
        sim.run_deferred()
    return tallies


def collect_metrics(sim: Simulator, cgroup_id: int, tallies: dict,
                    elapsed: float) -> Metrics:
    stats = sim.stats(cgroup_id)

    def op_ratio(op):
        t = tallies.get((cgroup_id, op))
        return None if t is None else _ratio(t[1], t[0])

    return Metrics(
        cgroup=cgroup_id,
        accesses=stats.accesses,
        hits=stats.hits,
        misses=stats.misses,
        hit_ratio=_ratio(stats.hits, stats.accesses) or 0.0,
        get_hit_ratio=op_ratio(Op.GET),
        scan_hit_ratio=op_ratio(Op.SCAN),
        read_hit_ratio=op_ratio(Op.READ),
        write_hit_ratio=op_ratio(Op.WRITE),
        evictions_policy=stats.evictions_policy,
        evictions_fallback=stats.evictions_fallback,
        invalid_candidates=stats.invalid_candidates,
        refault_activations=stats.refault_activations,
        writebacks=stats.writebacks,
        file_removed_folios=stats.file_removed_folios,
        replay_seconds=elapsed,
    )


def _check_conservation(sim: Simulator, cgroup_id: int, tallies: dict):
    """Accounting identities that must hold after every run."""
    stats = sim.stats(cgroup_id)
    if stats.hits + stats.misses != stats.accesses:
        raise AssertionError("hits + misses != accesses for cgroup %r"
                             % cgroup_id)
    resident = sim.resident_pages(cgroup_id)
    if stats.misses - stats.removals != resident:
        raise AssertionError(
            "insertions - removals != resident for cgroup %r" % cgroup_id)
    tallied = sum(t[0] for (cg, _), t in tallies.items() if cg == cgroup_id)
    if tallied != stats.accesses:
        raise AssertionError("per-op tallies out of sync for cgroup %r"
                             % cgroup_id)


def _build_sim(config: ScenarioConfig, policy_override=None) -> Simulator:
    sim = Simulator(candidate_batch=config.candidates)
    for spec in config.cgroups:
        sim.add_cgroup(spec.id, spec.limit_pages)
        name, params = spec.policy, spec.params
        if policy_override is not None:
            name, params = policy_override
        policy = make_policy(name, params, config.scan_window)
        if policy is not None:
            sim.attach_policy(spec.id, policy)
    return sim


def _policy_label(spec: CgroupSpec) -> str:
    return spec.policy


def run(config: ScenarioConfig, policy_override=None,
        events=None) -> Report:
    """Replay one scenario and return per-cgroup metrics.

    ``policy_override`` (name, params) replaces every cgroup's policy, and
    ``events`` replaces the generated stream; both exist for ``compare``
    and ``scenario_isolation``. A CSV report is written when the config
    names a report path.
    """
    errors = config.validate()
    if errors:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
    sim = _build_sim(config, policy_override)
    if events is None:
        events = build_events(config.workload, config.seed)
    start = time.perf_counter()
    tallies = replay(sim, events)
    elapsed = time.perf_counter() - start
    rows = []
    for spec in sorted(config.cgroups, key=lambda s: s.id):
        _check_conservation(sim, spec.id, tallies)
        label = policy_override[0] if policy_override else _policy_label(spec)
        rows.append((label,
                     collect_metrics(sim, spec.id, tallies, elapsed)))
    report = Report(rows)
    if config.report_path:
        report.save(config.report_path)
    return report


def compare(config: ScenarioConfig, policies) -> Report:
    """Run the identical event stream once per policy.

    ``policies`` is a list of policy names or (name, params) pairs; each
    entry is applied to every cgroup for its run. Rows keep the input
    order. The stream is rebuilt from the same seed for every run, so all
    runs see exactly the same events. Runs share no state and could
    execute in parallel; they run sequentially here and the row order is
    deterministic either way.
    """
    if not policies:
        raise ConfigError("compare needs at least one policy")
    normalized = []
    for entry in policies:
        if isinstance(entry, str):
            normalized.append((entry, {}))
        else:
            name, params = entry
            normalized.append((name, dict(params or {})))
    rows = []
    report_path, config.report_path = config.report_path, None
    try:
        for override in normalized:
            rows.extend(run(config, policy_override=override).rows)
    finally:
        config.report_path = report_path
    report = Report(rows)
    if config.report_path:
        report.save(config.report_path)
    return report


#: File ids of a merged stream's second tenant are shifted by this much so
#: the two workloads never share pages.
FILE_NAMESPACE_STRIDE = 1 << 32


def merge_streams(first: list, second: list) -> list:
    """Interleave two event lists proportionally to their lengths, so both
    finish together and each stream's internal order is preserved. Events
    are renumbered with merged sequence numbers."""
    merged = []
    ia = ib = 0
    na, nb = len(first), len(second)
    while ia < na or ib < nb:
        if ib >= nb or (ia < na and ia * nb <= ib * na):
            ev = first[ia]
            ia += 1
        else:
            ev = second[ib]
            ib += 1
        merged.append(TraceEvent(len(merged), ev.op, ev.cgroup, ev.file,
                                 ev.offset_bytes, ev.len_bytes, ev.thread))
    return merged


def _retarget(events, cgroup, file_stride=0):
    """Point a stream at one tenant: rewrite the cgroup id and optionally
    shift file ids into a disjoint namespace."""
    for ev in events:
        yield TraceEvent(ev.seq, ev.op, cgroup, ev.file + file_stride,
                         ev.offset_bytes, ev.len_bytes, ev.thread)


@dataclass
class IsolationReport:
    """Metrics for each (scenario, cgroup) of the two-tenant experiment."""

    rows: list
    scenarios: dict

    to_csv = Report.to_csv
    save = Report.save

    def hit_ratio(self, scenario: str, cgroup: int) -> float:
        return self.scenarios[scenario][cgroup].hit_ratio


def scenario_isolation(config_a: ScenarioConfig,
                       config_b: ScenarioConfig,
                       report_path: str | None = None) -> IsolationReport:
    """Two tenants, four policy assignments.

    Each config must hold exactly one cgroup (with its tailored policy) and
    one workload. The two streams are merged round-robin, scaled by their
    lengths, and replayed under: both cgroups on the default policy, both
    on tenant A's policy, both on tenant B's policy, and the tailored
    assignment. Tenant B's files are shifted into a disjoint namespace so
    the tenants never share pages.
    """
    for label, cfg in (("first", config_a), ("second", config_b)):
        errors = cfg.validate()
        if len(cfg.cgroups) != 1:
            errors.append("isolation needs exactly one cgroup per config")
        elif cfg.cgroups[0].policy == "default":
            errors.append("isolation needs a tailored policy per config")
        if errors:
            raise ConfigError("invalid %s scenario:\n  %s"
                              % (label, "\n  ".join(errors)))
    spec_a, spec_b = config_a.cgroups[0], config_b.cgroups[0]
    if spec_a.id == spec_b.id:
        raise ConfigError("isolation needs two distinct cgroup ids")

    stream_a = list(_retarget(build_events(config_a.workload, config_a.seed),
                              spec_a.id))
    stream_b = list(_retarget(build_events(config_b.workload, config_b.seed),
                              spec_b.id, FILE_NAMESPACE_STRIDE))
    merged = merge_streams(stream_a, stream_b)

    default = ("default", {})
    tailored_a = (spec_a.policy, spec_a.params)
    tailored_b = (spec_b.policy, spec_b.params)
    scenarios = [
        ("both-default", default, default),
        ("both-%s" % spec_a.policy, tailored_a, tailored_a),
        ("both-%s" % spec_b.policy, tailored_b, tailored_b),
        ("tailored", tailored_a, tailored_b),
    ]

    base = ScenarioConfig(cgroups=[spec_a, spec_b],
                          workload=config_a.workload,
                          seed=config_a.seed,
                          candidates=min(config_a.candidates,
                                         config_b.candidates),
                          scan_window=max(config_a.scan_window,
                                          config_b.scan_window))
    rows = []
    results: dict = {}
    for name, policy_a, policy_b in scenarios:
        if name in results:
            continue
        sim = Simulator(candidate_batch=base.candidates)
        for spec, (pol_name, pol_params) in ((spec_a, policy_a),
                                             (spec_b, policy_b)):
            sim.add_cgroup(spec.id, spec.limit_pages)
            policy = make_policy(pol_name, pol_params, base.scan_window)
            if policy is not None:
                sim.attach_policy(spec.id, policy)
        start = time.perf_counter()
        tallies = replay(sim, merged)
        elapsed = time.perf_counter() - start
        per_cgroup = {}
        for spec, (pol_name, _) in ((spec_a, policy_a), (spec_b, policy_b)):
            _check_conservation(sim, spec.id, tallies)
            metrics = collect_metrics(sim, spec.id, tallies, elapsed)
            per_cgroup[spec.id] = metrics
            rows.append(("%s/%s" % (name, pol_name), metrics))
        results[name] = per_cgroup
    report = IsolationReport(rows, results)
    if report_path:
        report.save(report_path)
    return report
