"""Deterministic discrete-event simulation of the three engines and the full
planning life cycle: workload replay, metric windows, triggers, planning,
transitions. Identical (scenario, seed) inputs give bitwise-identical logs.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .blueprint import (
    ENGINES,
    Blueprint,
    CapabilityConfig,
    ChangeKind,
    EngineId,
    TransitionPlan,
    diff_blueprints,
    load_capability_config,
    validate_blueprint,
)
from .comparator import CurrentMetrics, SloConfig
from .errors import ConfigError, TransitionInFlight
from .predictor import (
    NoisyOraclePredictor,
    OraclePredictor,
    Predictor,
    ProvisioningConstants,
    TxnModelConstants,
)
from .queryir import (
    DatasetCatalog,
    LogicalQuery,
    WorkloadWindow,
    estimate_selectivity,
    load_catalog,
    load_workload_records,
    stable_hash,
)
from .errors import NoFeasibleBlueprint
from .router import RouterConfig, route
from .scoring import (
    LoadState,
    PricingCatalog,
    ScoringModels,
    adjusted_runtime,
    load_pricing,
    transition_time_cost,
    warehouse_resident_bytes,
)
from .search import DEFAULT_BEAM_WIDTH, PlanningInputs, ProvisioningLattice, plan
from .stats import percentile  # re-exported: the simulator's percentile op

__all__ = [
    "EngineGroundTruth",
    "GroundTruthCoefficients",
    "MetricsLog",
    "Phase",
    "ScenarioConfig",
    "SimState",
    "TriggerConfig",
    "TriggerFired",
    "TriggerWindow",
    "apply_transition",
    "evaluate_triggers",
    "load_scenario",
    "percentile",
    "run_scenario",
]


# ---------------------------------------------------------------------------
# Synthetic engine ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthCoefficients:
    """Per-engine speed model over routing features (scan rows, joins)."""

    base_s: float
    per_million_rows_s: float
    per_join_s: float
    jitter: float = 0.0  # log-amplitude of per-(query, engine) deterministic jitter


MIN_RUNTIME_S = 1e-3


@dataclass(eq=False)
class EngineGroundTruth:
    """Base runtimes per (query, engine) and bytes scanned per query."""

    runtimes: dict
    scan_bytes: dict

    def base_runtime(self, query_id: str, engine: EngineId) -> float:
        return self.runtimes[(query_id, engine)]

    def bytes_scanned(self, query_id: str) -> float:
        return self.scan_bytes[query_id]

    @classmethod
    def generate(
        cls,
        queries: Sequence[LogicalQuery],
        catalog: DatasetCatalog,
        coefficients: Mapping[EngineId, GroundTruthCoefficients],
        seed: int,
    ) -> "EngineGroundTruth":
        runtimes: dict = {}
        scan_bytes: dict = {}
        for q in queries:
            sels = estimate_selectivity(q, catalog)
            mrows = sum(sels.scan_cardinality(catalog, t) for t in q.tables) / 1e6
            scan_bytes[q.query_id] = float(
                sum(catalog.table(t).size_bytes for t in q.tables)
            )
            for e in ENGINES:
                c = coefficients[e]
                base = c.base_s + c.per_million_rows_s * mrows + c.per_join_s * q.join_count
                if c.jitter > 0.0:
                    u = stable_hash(f"{seed}:{q.query_id}:{e.value}") / 2.0**64 * 2.0 - 1.0
                    base *= math.exp(u * c.jitter)
                runtimes[(q.query_id, e)] = max(MIN_RUNTIME_S, base)
        return cls(runtimes=runtimes, scan_bytes=scan_bytes)


# ---------------------------------------------------------------------------
# Metrics log
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MetricsLog:
    """Time-stamped metric records plus a structured event stream."""

    records: list = field(default_factory=list)   # (ts, metric, value)
    events: list = field(default_factory=list)    # dicts with at least ts, event

    def add(self, ts: float, metric: str, value: float) -> None:
        if self.records and ts < self.records[-1][0]:
            raise ValueError("metric timestamps must be nondecreasing")
        self.records.append((ts, metric, value))

    def event(self, ts: float, name: str, **detail) -> None:
        self.events.append({"ts": ts, "event": name, **detail})

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        ts = [r[0] for r in self.records if r[1] == metric]
        vs = [r[2] for r in self.records if r[1] == metric]
        return np.array(ts), np.array(vs)

    def to_csv_text(self) -> str:
        lines = ["timestamp,metric,value"]
        for ts, metric, value in self.records:
            lines.append(f"{ts:.1f},{metric},{value!r}")
        return "\n".join(lines) + "\n"

    def events_json_text(self) -> str:
        return json.dumps(self.events, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Triggers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriggerConfig:
    cpu_high: float = 0.85
    cpu_low: float = 0.15
    sustain_s: float = 600.0
    latency_sustain_s: float = 300.0
    recheck_after_change_s: float = 3600.0

    def __post_init__(self):
        if not 0.0 <= self.cpu_low < self.cpu_high <= 1.0:
            raise ValueError("need 0 <= cpu_low < cpu_high <= 1")


@dataclass(frozen=True)
class TriggerFired:
    kind: str       # txn_latency_slo | query_latency_slo | cpu_high | cpu_low | recheck
    detail: str
    at: float


@dataclass(eq=False)
class TriggerWindow:
    """Bucketed metric series the trigger rules are evaluated over."""

    ts: np.ndarray                       # bucket end times, ascending
    txn_p90: np.ndarray
    query_p90: np.ndarray
    cpu: Mapping[EngineId, np.ndarray]
    active: Mapping[EngineId, bool]
    interval_s: float


def _sustained(
    window: TriggerWindow,
    values: np.ndarray,
    span_s: float,
    quiet_since: float,
    now: float,
    pred: Callable[[np.ndarray], np.ndarray],
) -> bool:
    """True when every bucket in the trailing span satisfies pred, the span is
    fully covered by buckets, and it postdates the last planning activity."""
    if now - quiet_since < span_s:
        return False
    need = int(round(span_s / window.interval_s))
    if need <= 0 or window.ts.size < need:
        return False
    ts = window.ts[-need:]
    # Reject stale series (no fresh buckets) and anything predating the quiet mark.
    if now - ts[0] > span_s + window.interval_s or ts[0] <= quiet_since:
        return False
    return bool(np.all(pred(values[-need:])))


def evaluate_triggers(
    window: TriggerWindow,
    cfg: TriggerConfig,
    slo: SloConfig,
    last_change_at: Optional[float],
    now: float,
    last_plan_at: Optional[float] = None,
    recheck_done: bool = False,
) -> Optional[TriggerFired]:
    """Highest-priority firing trigger, or None. Priority: txn latency SLO,
    query latency SLO, cpu_high, cpu_low (engines in enum order), recheck.
    Sustained conditions only count samples after the last planning activity.
    """
    quiet = -math.inf
    for mark in (last_change_at, last_plan_at):
        if mark is not None:
            quiet = max(quiet, mark)

    if _sustained(window, window.txn_p90, cfg.latency_sustain_s, quiet, now,
                  lambda v: v > slo.txn_p90_s):
        return TriggerFired("txn_latency_slo", f"txn p90 above {slo.txn_p90_s}s", now)
    if _sustained(window, window.query_p90, cfg.latency_sustain_s, quiet, now,
                  lambda v: v > slo.query_p90_s):
        return TriggerFired("query_latency_slo", f"query p90 above {slo.query_p90_s}s", now)
    for e in (EngineId.ROW_STORE, EngineId.WAREHOUSE):
        if not window.active.get(e, False):
            continue
        series = window.cpu[e]
        if _sustained(window, series, cfg.sustain_s, quiet, now, lambda v: v > cfg.cpu_high):
            return TriggerFired("cpu_high", f"{e.value} cpu above {cfg.cpu_high:.2f}", now)
    for e in (EngineId.ROW_STORE, EngineId.WAREHOUSE):
        if not window.active.get(e, False):
            continue
        series = window.cpu[e]
        if _sustained(window, series, cfg.sustain_s, quiet, now, lambda v: v < cfg.cpu_low):
            return TriggerFired("cpu_low", f"{e.value} cpu below {cfg.cpu_low:.2f}", now)
    if (
        not recheck_done
        and last_change_at is not None
        and now - last_change_at >= cfg.recheck_after_change_s
    ):
        return TriggerFired("recheck", "re-optimizing after a recent change", now)
    return None


# ---------------------------------------------------------------------------
# Engine servers (single-server FIFO, matching the scoring queue family)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Job:
    query_idx: int
    arrival: float


@dataclass(eq=False)
class EngineServer:
    engine: EngineId
    service_factor: float = 1.0   # provisioning multiplier applied at job start
    queue: deque = field(default_factory=deque)
    current: Optional[tuple[int, float, float, float]] = None  # (idx, arrival, start, finish)
    free_at: float = 0.0

    def enqueue(self, query_idx: int, arrival: float) -> None:
        self.queue.append(_Job(query_idx, arrival))

    def in_flight(self) -> int:
        return len(self.queue) + (1 if self.current is not None else 0)

    def advance(
        self,
        t0: float,
        t1: float,
        base_runtime: Callable[[int], float],
        on_complete: Callable[[int, float, float, float], None],
    ) -> float:
        """Run the FIFO server through [t0, t1); returns busy seconds inside
        the tick. Service times are fixed when a job starts, using the factor
        active at that moment (a draining paused engine keeps its last factor).
        """
        busy = 0.0
        while True:
            if self.current is not None:
                idx, arrival, start, finish = self.current
                if finish <= t1:
                    busy += max(0.0, finish - max(start, t0))
                    on_complete(idx, arrival, finish, finish - start)
                    self.free_at = finish
                    self.current = None
                else:
                    busy += max(0.0, t1 - max(start, t0))
                    break
            else:
                if self.queue and self.queue[0].arrival < t1:
                    job = self.queue.popleft()
                    start = max(self.free_at, job.arrival)
                    service = base_runtime(job.query_idx) * self.service_factor
                    self.current = (job.query_idx, job.arrival, start, start + service)
                else:
                    break
        return busy


# ---------------------------------------------------------------------------
# Simulation state and transitions
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PendingTransition:
    blueprint: Blueprint
    plan: TransitionPlan
    activate_at: float
    transition_time_s: float
    transition_cost: float


@dataclass(eq=False)
class SimState:
    clock: float
    blueprint: Blueprint
    servers: dict
    pending: Optional[PendingTransition] = None
    last_change_at: Optional[float] = None
    last_plan_at: Optional[float] = None
    recheck_done: bool = False
    spike_until: float = -math.inf


def apply_transition(
    state: SimState,
    new_blueprint: Blueprint,
    plan_: TransitionPlan,
    est: tuple[float, float],
) -> SimState:
    """Schedule the transition: the old blueprint serves until clock + T_T,
    then the new one activates atomically. Zero-duration plans (pure pauses,
    replica removals) activate immediately.
    """
    if state.pending is not None:
        raise TransitionInFlight("a transition is already in flight")
    t_t, c_t = est
    state.pending = PendingTransition(
        blueprint=new_blueprint,
        plan=plan_,
        activate_at=state.clock + t_t,
        transition_time_s=t_t,
        transition_cost=c_t,
    )
    if t_t <= 0.0:
        _activate(state, spike_factor_s=None)
    return state


def _activate(state: SimState, spike_factor_s: Optional[tuple[float, float]]) -> None:
    pending = state.pending
    state.blueprint = pending.blueprint
    state.pending = None
    state.last_change_at = state.clock if state.clock > 0 else 0.0
    state.recheck_done = False
    if spike_factor_s is not None:
        for change in pending.plan.provisioning_changes:
            if change.engine is EngineId.ROW_STORE and change.kind is ChangeKind.INSTANCE_CHANGE:
                state.spike_until = state.clock + spike_factor_s[1]
                break


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    start_s: float
    txn_rate_per_s: float
    query_rate_multiplier: float = 1.0


@dataclass(eq=False)
class ScenarioConfig:
    name: str
    seed: int
    duration_s: float
    queries: tuple
    catalog: DatasetCatalog
    pricing: PricingCatalog
    slo: SloConfig
    caps: Optional[CapabilityConfig]
    initial_blueprint: Blueprint
    phases: tuple
    txn_constants: TxnModelConstants
    txn_cpu_s: float
    provisioning_constants: Mapping[EngineId, ProvisioningConstants]
    ground_truth_coefficients: Mapping[EngineId, GroundTruthCoefficients]
    triggers: TriggerConfig
    router_cfg: RouterConfig
    tick_s: float = 1.0
    metrics_interval_s: float = 30.0
    planning_window_s: float = 3600.0
    # Current-CPU horizon for LoadState; much shorter than the workload window
    # so the planner sees post-shift load levels, not the window average.
    utilization_window_s: float = 120.0
    beam_width: int = DEFAULT_BEAM_WIDTH
    lattice_radius: int = 1
    node_counts: Optional[Mapping[EngineId, tuple]] = None
    predictor_kind: str = "oracle"           # oracle | noisy
    noisy_fraction: float = 0.0
    noisy_error: float = 0.0
    noisy_seed: int = 0
    fallback_load_constant: float = 0.001
    failover_spike_factor: float = 10.0
    failover_spike_s: float = 60.0

    def phase_at(self, t: float) -> Phase:
        active = self.phases[0]
        for p in self.phases:
            if t >= p.start_s:
                active = p
        return active

    def make_ground_truth(self, seed: int) -> EngineGroundTruth:
        return EngineGroundTruth.generate(
            self.queries, self.catalog, self.ground_truth_coefficients, seed
        )

    def make_predictor(self, truth: EngineGroundTruth) -> Predictor:
        if self.predictor_kind == "oracle":
            return OraclePredictor(truth)
        if self.predictor_kind == "noisy":
            return NoisyOraclePredictor(
                truth, self.noisy_fraction, self.noisy_error, self.noisy_seed
            )
        raise ConfigError(f"unknown predictor kind {self.predictor_kind!r}")

    def make_models(self, predictor: Predictor) -> ScoringModels:
        return ScoringModels(
            predictor=predictor,
            provisioning_constants=self.provisioning_constants,
            txn_constants=self.txn_constants,
            pricing=self.pricing,
            fallback_load_constant=self.fallback_load_constant,
        )

    def make_lattice(self) -> ProvisioningLattice:
        return ProvisioningLattice.from_pricing(
            self.pricing, node_counts=self.node_counts, radius=self.lattice_radius
        )


def load_scenario(path) -> ScenarioConfig:
    """Parse a scenario JSON file; companion files resolve relative to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    base = path.parent
    try:
        caps_doc = doc.get("capabilities", {})
        caps = load_capability_config(caps_doc) if caps_doc else None
        keywords = tuple(caps_doc) if caps_doc else ()
        queries = load_workload_records(
            base / doc["workload_file"],
            capability_keywords=keywords or ("<=>",),
        )
        catalog = load_catalog(base / doc["catalog_file"])
        pricing = load_pricing(base / doc["pricing_file"])
        slo = SloConfig.from_json_dict(doc["slo"])
        bp = Blueprint.from_json_dict(doc["initial_blueprint"])
        txn = doc["txn"]
        planner = doc.get("planner", {})
        node_counts = None
        if "node_counts" in planner:
            node_counts = {
                EngineId(e): tuple(int(n) for n in ns)
                for e, ns in planner["node_counts"].items()
            }
        spike = doc.get("failover_spike", {})
        scenario = ScenarioConfig(
            name=doc["name"],
            seed=int(doc["seed"]),
            duration_s=float(doc["duration_s"]),
            queries=queries,
            catalog=catalog,
            pricing=pricing,
            slo=slo,
            caps=caps,
            initial_blueprint=bp,
            phases=tuple(
                Phase(
                    start_s=float(p["start_s"]),
                    txn_rate_per_s=float(p["txn_rate_per_s"]),
                    query_rate_multiplier=float(p.get("query_rate_multiplier", 1.0)),
                )
                for p in doc["phases"]
            ),
            txn_constants=TxnModelConstants(
                a=float(txn["a"]), b=float(txn["b"]), m=float(txn["m"])
            ),
            txn_cpu_s=float(txn.get("cpu_s_per_txn", 0.0)),
            provisioning_constants={
                EngineId(e): ProvisioningConstants(
                    c1=float(c["c1"]), c2=float(c["c2"]), base_vcpus=int(c["base_vcpus"])
                )
                for e, c in doc["provisioning_constants"].items()
            },
            ground_truth_coefficients={
                EngineId(e): GroundTruthCoefficients(
                    base_s=float(c["base_s"]),
                    per_million_rows_s=float(c["per_million_rows_s"]),
                    per_join_s=float(c["per_join_s"]),
                    jitter=float(c.get("jitter", 0.0)),
                )
                for e, c in doc["ground_truth"].items()
            },
            triggers=TriggerConfig(
                cpu_high=float(doc.get("triggers", {}).get("cpu_high", 0.85)),
                cpu_low=float(doc.get("triggers", {}).get("cpu_low", 0.15)),
                sustain_s=float(doc.get("triggers", {}).get("sustain_s", 600.0)),
                latency_sustain_s=float(
                    doc.get("triggers", {}).get("latency_sustain_s", 300.0)
                ),
                recheck_after_change_s=float(
                    doc.get("triggers", {}).get("recheck_after_change_s", 3600.0)
                ),
            ),
            router_cfg=RouterConfig(
                n_trees=int(doc.get("router", {}).get("n_trees", 25)),
                max_depth=int(doc.get("router", {}).get("max_depth", 6)),
                seed=int(doc.get("router", {}).get("seed", 0)),
            ),
            tick_s=float(doc.get("tick_s", 1.0)),
            metrics_interval_s=float(doc.get("metrics_interval_s", 30.0)),
            planning_window_s=float(doc.get("planning_window_s", 3600.0)),
            utilization_window_s=float(doc.get("utilization_window_s", 120.0)),
            beam_width=int(planner.get("beam_width", DEFAULT_BEAM_WIDTH)),
            lattice_radius=int(planner.get("radius", 1)),
            node_counts=node_counts,
            predictor_kind=str(planner.get("predictor", "oracle")),
            noisy_fraction=float(planner.get("noisy", {}).get("fraction", 0.0)),
            noisy_error=float(planner.get("noisy", {}).get("error", 0.0)),
            noisy_seed=int(planner.get("noisy", {}).get("seed", 0)),
            fallback_load_constant=float(doc.get("fallback_load_constant", 0.001)),
            failover_spike_factor=float(spike.get("factor", 10.0)),
            failover_spike_s=float(spike.get("duration_s", 60.0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed scenario {path}: {exc}") from exc
    report = validate_blueprint(scenario.initial_blueprint, scenario.catalog)
    if not report.ok:
        raise ConfigError(f"initial blueprint invalid: {report.rules()}")
    return scenario


# ---------------------------------------------------------------------------
# Rolling window helpers
# ---------------------------------------------------------------------------

class _RollingMean:
    """Fixed-length rolling mean over per-tick values."""

    def __init__(self, span_ticks: int):
        self.span = max(1, span_ticks)
        self.buf: deque = deque()
        self.total = 0.0

    def push(self, v: float) -> None:
        self.buf.append(v)
        self.total += v
        if len(self.buf) > self.span:
            self.total -= self.buf.popleft()

    def mean(self) -> float:
        return self.total / len(self.buf) if self.buf else 0.0


class _TimedSamples:
    """(t, value, weight) samples pruned to a trailing horizon."""

    def __init__(self, horizon_s: float):
        self.horizon = horizon_s
        self.buf: deque = deque()

    def push(self, t: float, value: float, weight: float = 1.0) -> None:
        self.buf.append((t, value, weight))

    def prune(self, now: float) -> None:
        cutoff = now - self.horizon
        while self.buf and self.buf[0][0] <= cutoff:
            self.buf.popleft()

    def since(self, t0: float) -> tuple[np.ndarray, np.ndarray]:
        vals = [(v, w) for (t, v, w) in self.buf if t > t0]
        if not vals:
            return np.array([]), np.array([])
        arr = np.array(vals)
        return arr[:, 0], arr[:, 1]

    def percentile_since(self, t0: float, p: float) -> Optional[float]:
        values, weights = self.since(t0)
        if values.size == 0 or weights.sum() <= 0:
            return None
        return percentile(values, p, weights)


# ---------------------------------------------------------------------------
# The scenario loop
# ---------------------------------------------------------------------------

def _provisioning_factor(
    scenario: ScenarioConfig, models: ScoringModels, engine: EngineId, bp: Blueprint
) -> float:
    prov = bp.provisionings[engine]
    if engine is EngineId.SCAN_SERVICE:
        return 1.0
    if not prov.is_active:
        return math.inf
    return adjusted_runtime(models, 1.0, engine, prov)


def _fixed_cost_rate(bp: Blueprint, catalog: DatasetCatalog, pricing: PricingCatalog) -> float:
    cost = sum(pricing.node_cost_per_hour(p) for p in bp.provisionings.values())
    for table, engines in bp.placement.placement.items():
        rows = catalog.table(table).row_count
        for e in engines:
            cost += pricing.storage_rate_per_hour(e, table, rows)
    return float(cost)


def _generate_arrivals(
    scenario: ScenarioConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Poisson arrivals per (phase, query), merged and time-sorted."""
    times: list[np.ndarray] = []
    qidx: list[np.ndarray] = []
    phases = list(scenario.phases)
    for pi, phase in enumerate(phases):
        end = phases[pi + 1].start_s if pi + 1 < len(phases) else scenario.duration_s
        dur_h = max(0.0, end - phase.start_s) / 3600.0
        for qi, q in enumerate(scenario.queries):
            lam = q.arrival_rate * phase.query_rate_multiplier * dur_h
            n = int(rng.poisson(lam)) if lam > 0 else 0
            if n == 0:
                continue
            ts = np.sort(rng.uniform(phase.start_s, end, size=n))
            times.append(ts)
            qidx.append(np.full(n, qi, dtype=np.int64))
    if not times:
        return np.array([]), np.array([], dtype=np.int64)
    all_t = np.concatenate(times)
    all_q = np.concatenate(qidx)
    order = np.lexsort((all_q, all_t))
    return all_t[order], all_q[order]


def cold_start_inputs(
    scenario: ScenarioConfig,
    models: ScoringModels,
    truth: EngineGroundTruth,
) -> PlanningInputs:
    """Planning inputs as if the initial blueprint had served the nominal
    workload for one planning window: measured state comes from ground truth,
    candidate predictions from `models` (possibly noisy).
    """
    bp = scenario.initial_blueprint
    phase = scenario.phases[0]
    span_h = scenario.planning_window_s / 3600.0
    queries = tuple(
        replace(q, arrival_rate=q.arrival_rate * phase.query_rate_multiplier)
        for q in scenario.queries
    )
    oracle_models = scenario.make_models(OraclePredictor(truth))

    observed = {e: 0.0 for e in ENGINES}
    latencies = []
    weights = []
    for q in queries:
        e = bp.routing.assignments.get(q.query_id)
        if e is None:
            e = route(q, bp, bp.routing.online_policy, scenario.caps, scenario.catalog)
        padj = adjusted_runtime(
            oracle_models, truth.base_runtime(q.query_id, e), e, bp.provisionings[e]
        )
        observed[e] += q.arrival_rate * span_h * padj
        latencies.append(padj)
        weights.append(q.arrival_rate)

    rs_prov = bp.provisionings[EngineId.ROW_STORE]
    rs_base = scenario.provisioning_constants[EngineId.ROW_STORE].base_vcpus
    txn_addend = 0.0
    if phase.txn_rate_per_s > 0 and rs_prov.is_active:
        txn_addend = phase.txn_rate_per_s * scenario.txn_cpu_s * (rs_base / rs_prov.total_vcpus)
    utilization = {}
    for e in ENGINES:
        busy = observed[e] / (scenario.planning_window_s or 1.0)
        if e is EngineId.ROW_STORE:
            busy += txn_addend
        utilization[e] = min(1.0, busy)

    c = scenario.txn_constants
    rho_t = min(utilization[EngineId.ROW_STORE], c.m - MIN_RUNTIME_S)
    txn_p90 = (c.a / (c.m - rho_t) + c.b) if phase.txn_rate_per_s > 0 else 0.0
    query_p90 = (
        float(percentile(np.array(latencies), 0.9, np.array(weights))) if latencies else 0.0
    )
    metrics = CurrentMetrics(
        txn_p90_s=txn_p90,
        query_p90_s=query_p90,
        operating_cost_per_hour=_fixed_cost_rate(bp, scenario.catalog, scenario.pricing),
    )
    load = LoadState(utilization=utilization, observed_runtime_sum_s=observed)
    workload = WorkloadWindow(
        queries=queries,
        txn_rate_per_s=phase.txn_rate_per_s,
        catalog=scenario.catalog,
        window_hours=span_h,
    )
    return PlanningInputs(
        workload=workload, current=bp, models=models,
        slo=scenario.slo, metrics=metrics, load=load, caps=scenario.caps,
    )


def run_scenario(scenario: ScenarioConfig, seed: Optional[int] = None) -> tuple[MetricsLog, dict]:
    """Event loop: replay arrivals against the simulated engines, collect
    bucketed metrics, evaluate triggers, plan and transition on firings.
    """
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    truth = scenario.make_ground_truth(seed)
    predictor = scenario.make_predictor(truth)
    models = scenario.make_models(predictor)
    lattice = scenario.make_lattice()
    log = MetricsLog()

    queries = scenario.queries
    catalog = scenario.catalog
    pricing = scenario.pricing
    tick = scenario.tick_s
    interval = scenario.metrics_interval_s
    window_s = scenario.planning_window_s
    rs_base_vcpus = scenario.provisioning_constants[EngineId.ROW_STORE].base_vcpus

    state = SimState(
        clock=0.0,
        blueprint=scenario.initial_blueprint,
        servers={e: EngineServer(e) for e in ENGINES},
    )
    for e in ENGINES:
        state.servers[e].service_factor = _provisioning_factor(
            scenario, models, e, state.blueprint
        )

    arrive_t, arrive_q = _generate_arrivals(scenario, rng)
    arrive_ptr = 0
    arrivals_total = 0
    completions_total = 0

    query_samples = _TimedSamples(window_s)     # completion latencies
    txn_samples = _TimedSamples(window_s)       # per-tick txn latency @ rate weight
    scan_dollars = _TimedSamples(window_s)      # scan-service charges
    service_done = {e: _TimedSamples(window_s) for e in ENGINES}  # service seconds
    util_meas = {e: _RollingMean(int(scenario.utilization_window_s / tick)) for e in ENGINES}
    util_bucket = {e: _RollingMean(int(interval / tick)) for e in ENGINES}
    util_short = {e: _RollingMean(int(60.0 / tick)) for e in ENGINES}
    arrivals_window = {q.query_id: _TimedSamples(window_s) for q in queries}
    txn_rate_window = _RollingMean(int(window_s / tick))

    bucket_ts: list[float] = []
    bucket_txn: list[float] = []
    bucket_query: list[float] = []
    bucket_cpu: dict = {e: [] for e in ENGINES}
    bucket_cost: list[float] = []
    carry_txn = 0.0
    carry_query = 0.0
    plans_run = 0
    changes = 0
    trigger_counts: dict = {}
    activations: list[float] = []

    def tick_txn_stats(now: float, bp: Blueprint, txn_rate: float) -> tuple[float, float]:
        """(utilization addend, true txn latency) at this instant."""
        prov = bp.provisionings[EngineId.ROW_STORE]
        if txn_rate <= 0.0:
            return 0.0, 0.0
        if not prov.is_active:
            return 0.0, scenario.txn_constants.a / MIN_RUNTIME_S + scenario.txn_constants.b
        addend = txn_rate * scenario.txn_cpu_s * (rs_base_vcpus / prov.total_vcpus)
        busy = util_short[EngineId.ROW_STORE].mean()
        rho_t = min(1.0, busy + addend)
        c = scenario.txn_constants
        gap = max(c.m - rho_t, MIN_RUNTIME_S)
        lat = c.a / gap + c.b
        if now < state.spike_until:
            lat *= scenario.failover_spike_factor
        return addend, lat

    def snapshot_and_plan(now: float) -> None:
        nonlocal plans_run, changes
        span = min(window_s, now) if now > 0 else window_s
        t0 = now - span
        span_h = span / 3600.0
        observed = []
        for q in queries:
            values, _ = arrivals_window[q.query_id].since(t0)
            count = values.size
            if count > 0:
                observed.append(replace(q, arrival_rate=count / span_h))
        txn_rate = txn_rate_window.mean()
        wl = WorkloadWindow(
            queries=tuple(observed),
            txn_rate_per_s=txn_rate,
            catalog=catalog,
            window_hours=span_h,
        )
        load = LoadState(
            utilization={e: util_meas[e].mean() for e in ENGINES},
            observed_runtime_sum_s={
                e: float(service_done[e].since(t0)[0].sum()) for e in ENGINES
            },
        )
        txn_p90 = txn_samples.percentile_since(t0, 0.9) or 0.0
        query_p90 = query_samples.percentile_since(t0, 0.9) or 0.0
        metrics = CurrentMetrics(
            txn_p90_s=txn_p90,
            query_p90_s=query_p90,
            operating_cost_per_hour=cost_rate(now),
        )
        inputs = PlanningInputs(
            workload=wl,
            current=state.blueprint,
            models=models,
            slo=scenario.slo,
            metrics=metrics,
            load=load,
            caps=scenario.caps,
        )
        plans_run += 1
        state.last_plan_at = now
        try:
            result = plan(inputs, lattice, k=scenario.beam_width, router_cfg=scenario.router_cfg)
        except NoFeasibleBlueprint:
            log.event(now, "plan_infeasible")
            return
        new_bp = result.blueprint
        if new_bp.digest() == state.blueprint.digest():
            log.event(now, "plan_no_change", digest=new_bp.digest(), w=result.w)
            return
        transition = diff_blueprints(state.blueprint, new_bp, catalog)
        est = transition_time_cost(
            transition, pricing, warehouse_resident_bytes(state.blueprint, catalog)
        )
        log.event(
            now, "plan_selected",
            digest=new_bp.digest(), w=result.w,
            candidates=result.candidates_scored,
            provisionings=result.provisionings_tried,
            transition_time_s=est[0],
            warehouse_paused=not new_bp.provisionings[EngineId.WAREHOUSE].is_active,
        )
        apply_transition(state, new_bp, transition, est)
        changes += 1
        if state.pending is None:
            on_activated(now)
        else:
            log.event(now, "transition_started", completes_at=state.pending.activate_at)

    def on_activated(now: float) -> None:
        log.event(now, "blueprint_activated", digest=state.blueprint.digest())
        activations.append(now)
        for e in ENGINES:
            factor = _provisioning_factor(scenario, models, e, state.blueprint)
            if math.isfinite(factor):
                state.servers[e].service_factor = factor

    def cost_rate(now: float) -> float:
        fixed = _fixed_cost_rate(state.blueprint, catalog, pricing)
        if now <= 0:
            return fixed
        t0 = max(0.0, now - window_s)
        spend, _ = scan_dollars.since(t0)
        span_h = max(now - t0, interval) / 3600.0
        return fixed + float(spend.sum()) / span_h

    n_ticks = int(round(scenario.duration_s / tick))
    for step in range(n_ticks):
        t0 = step * tick
        t1 = t0 + tick
        state.clock = t0

        if state.pending is not None and state.pending.activate_at <= t0:
            _activate(state, (scenario.failover_spike_factor, scenario.failover_spike_s))
            on_activated(t0)

        while arrive_ptr < arrive_t.size and arrive_t[arrive_ptr] < t1:
            at = float(arrive_t[arrive_ptr])
            qi = int(arrive_q[arrive_ptr])
            arrive_ptr += 1
            q = queries[qi]
            engine = route(
                q, state.blueprint, state.blueprint.routing.online_policy,
                scenario.caps, catalog,
            )
            state.servers[engine].enqueue(qi, at)
            arrivals_window[q.query_id].push(at, 1.0)
            arrivals_total += 1

        phase = scenario.phase_at(t0)
        txn_rate = phase.txn_rate_per_s
        txn_rate_window.push(txn_rate)

        for e in ENGINES:
            server = state.servers[e]

            def complete(idx: int, arrival: float, finish: float, service: float, _e=e):
                nonlocal completions_total
                completions_total += 1
                query_samples.push(finish, finish - arrival, 1.0)
                service_done[_e].push(finish, service, 1.0)
                if _e is EngineId.SCAN_SERVICE:
                    qid = queries[idx].query_id
                    scan_dollars.push(
                        finish, truth.bytes_scanned(qid) * pricing.scan_price_per_byte
                    )

            busy = server.advance(
                t0, t1,
                lambda idx, _e=e: truth.base_runtime(queries[idx].query_id, _e),
                complete,
            )
            util = busy / tick
            if e is EngineId.ROW_STORE:
                addend, txn_lat = tick_txn_stats(t0, state.blueprint, txn_rate)
                util = min(1.0, util + addend)
                if txn_rate > 0.0:
                    txn_samples.push(t1, txn_lat, txn_rate * tick)
            util_meas[e].push(util)
            util_bucket[e].push(util)
            util_short[e].push(busy / tick)

        for buf in (query_samples, txn_samples, scan_dollars):
            buf.prune(t1)
        for e in ENGINES:
            service_done[e].prune(t1)
        for q in queries:
            arrivals_window[q.query_id].prune(t1)

        if (step + 1) % int(round(interval / tick)) == 0:
            now = t1
            tp = txn_samples.percentile_since(now - interval, 0.9)
            qp = query_samples.percentile_since(now - interval, 0.9)
            carry_txn = tp if tp is not None else carry_txn
            carry_query = qp if qp is not None else carry_query
            bucket_ts.append(now)
            bucket_txn.append(carry_txn)
            bucket_query.append(carry_query)
            for e in ENGINES:
                bucket_cpu[e].append(util_bucket[e].mean())
            rate = cost_rate(now)
            bucket_cost.append(rate)
            log.add(now, "txn_p90_s", carry_txn)
            log.add(now, "query_p90_s", carry_query)
            for e in ENGINES:
                log.add(now, f"cpu_{e.value}", bucket_cpu[e][-1])
            log.add(now, "cost_per_hour", rate)

        if state.pending is None and bucket_ts:
            window = TriggerWindow(
                ts=np.array(bucket_ts),
                txn_p90=np.array(bucket_txn),
                query_p90=np.array(bucket_query),
                cpu={e: np.array(bucket_cpu[e]) for e in ENGINES},
                active={
                    e: state.blueprint.provisionings[e].is_active
                    and e is not EngineId.SCAN_SERVICE
                    for e in ENGINES
                },
                interval_s=interval,
            )
            fired = evaluate_triggers(
                window, scenario.triggers, scenario.slo,
                state.last_change_at, now=t1,
                last_plan_at=state.last_plan_at,
                recheck_done=state.recheck_done,
            )
            if fired is not None:
                if fired.kind == "recheck":
                    state.recheck_done = True
                trigger_counts[fired.kind] = trigger_counts.get(fired.kind, 0) + 1
                log.event(t1, "trigger", kind=fired.kind, detail=fired.detail)
                state.clock = t1
                snapshot_and_plan(t1)

    state.clock = float(scenario.duration_s)
    in_flight = sum(state.servers[e].in_flight() for e in ENGINES)

    post_t0 = activations[-1] if activations else 0.0
    def compliance(values: Sequence[float], slo_value: float, t_from: float) -> float:
        pts = [(ts, v) for ts, v in zip(bucket_ts, values) if ts > t_from]
        if not pts:
            return 1.0
        ok = sum(1 for _, v in pts if v <= slo_value)
        return ok / len(pts)

    summary = {
        "scenario": scenario.name,
        "seed": seed,
        "duration_s": scenario.duration_s,
        "cost_initial_per_hour": bucket_cost[0] if bucket_cost else 0.0,
        "cost_final_per_hour": bucket_cost[-1] if bucket_cost else 0.0,
        "blueprint_changes": changes,
        "plans_run": plans_run,
        "triggers_fired": trigger_counts,
        "final_blueprint": {
            "digest": state.blueprint.digest(),
            "warehouse_paused": not state.blueprint.provisionings[EngineId.WAREHOUSE].is_active,
            "rowstore_vcpus": state.blueprint.provisionings[EngineId.ROW_STORE].total_vcpus,
            "rowstore_instance": state.blueprint.provisionings[EngineId.ROW_STORE].instance_type,
        },
        "compliance": {
            "txn_overall": compliance(bucket_txn, scenario.slo.txn_p90_s, 0.0),
            "query_overall": compliance(bucket_query, scenario.slo.query_p90_s, 0.0),
            "txn_post_transition": compliance(bucket_txn, scenario.slo.txn_p90_s, post_t0),
            "query_post_transition": compliance(bucket_query, scenario.slo.query_p90_s, post_t0),
        },
        "conservation": {
            "arrivals": arrivals_total,
            "completions": completions_total,
            "in_flight_at_end": in_flight,
        },
        "activations": activations,
    }
    return log, summary
