"""Blueprint scoring: run-time adjustment, queueing delay, transaction latency,
operating cost, and transition time/cost, assembled into a VectorScore.

This module is the readable reference path. The search module batches the same
arithmetic through the kernels for the hot loops; tests pin the two together.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .blueprint import (
    Blueprint,
    EngineId,
    Provisioning,
    TransitionPlan,
    ChangeKind,
    diff_blueprints,
)
from .errors import Saturated, UnknownPrice, UtilizationOutOfRange
from .predictor import Predictor, ProvisioningConstants, TxnModelConstants
from .queryir import DatasetCatalog, WorkloadWindow

MB = 2**20
GB = 2**30
TB = 2**40

OVERLOAD_EPSILON = 0.02   # guard before the M/M/1 pole
FALLBACK_LOAD_CONSTANT = 0.001  # utilization per routed-runtime-second, no-observation case
WAIT_PERCENTILE = 0.9


# ---------------------------------------------------------------------------
# Pricing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstancePrice:
    price_per_hour: float
    vcpus: int


@dataclass(frozen=True)
class PricingCatalog:
    """On-demand node prices, scan pricing, storage constants, transfer rates."""

    instance_prices: Mapping[EngineId, Mapping[str, InstancePrice]]
    scan_price_per_tb: float
    storage_per_row_hour: Mapping[EngineId, object]  # scalar or {"default", "overrides"}
    export_rate_bps: Mapping[EngineId, float]
    import_rate_bps: Mapping[EngineId, float]
    rowstore_change_s: float = 300.0
    elastic_resize_s: float = 900.0
    classic_resize_bps: float = 18.0 * MB
    transfer_price_per_tb: float = 0.0

    def instance_price(self, engine: EngineId, instance_type: str) -> InstancePrice:
        try:
            return self.instance_prices[engine][instance_type]
        except KeyError:
            raise UnknownPrice(f"no price for ({engine}, {instance_type})") from None

    def ordered_types(self, engine: EngineId) -> tuple[str, ...]:
        return tuple(self.instance_prices.get(engine, {}))

    def vcpus(self, engine: EngineId, instance_type: str) -> int:
        return self.instance_price(engine, instance_type).vcpus

    def node_cost_per_hour(self, prov: Provisioning) -> float:
        if prov.node_count == 0:
            return 0.0
        return prov.node_count * self.instance_price(prov.engine, prov.instance_type).price_per_hour

    @property
    def scan_price_per_byte(self) -> float:
        return self.scan_price_per_tb / TB

    @property
    def transfer_price_per_byte(self) -> float:
        return self.transfer_price_per_tb / TB

    def storage_rate_per_hour(self, engine: EngineId, table: str, row_count: int) -> float:
        entry = self.storage_per_row_hour.get(engine)
        if entry is None:
            raise UnknownPrice(f"no storage constant for {engine}")
        if isinstance(entry, Mapping):
            k = entry.get("overrides", {}).get(table, entry.get("default"))
            if k is None:
                raise UnknownPrice(f"no storage constant for ({engine}, {table})")
        else:
            k = entry
        return float(k) * row_count

    def to_json_dict(self) -> dict:
        return {
            "instance_prices": {
                e.value: {
                    t: {"price_per_hour": p.price_per_hour, "vcpus": p.vcpus}
                    for t, p in types.items()
                }
                for e, types in self.instance_prices.items()
            },
            "scan_price_per_tb": self.scan_price_per_tb,
            "storage_per_row_hour": {
                e.value: (dict(v) if isinstance(v, Mapping) else v)
                for e, v in self.storage_per_row_hour.items()
            },
            "export_rate_bps": {e.value: v for e, v in self.export_rate_bps.items()},
            "import_rate_bps": {e.value: v for e, v in self.import_rate_bps.items()},
            "rowstore_change_s": self.rowstore_change_s,
            "elastic_resize_s": self.elastic_resize_s,
            "classic_resize_bps": self.classic_resize_bps,
            "transfer_price_per_tb": self.transfer_price_per_tb,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "PricingCatalog":
        return cls(
            instance_prices={
                EngineId(e): {
                    t: InstancePrice(float(p["price_per_hour"]), int(p["vcpus"]))
                    for t, p in types.items()
                }
                for e, types in doc["instance_prices"].items()
            },
            scan_price_per_tb=float(doc["scan_price_per_tb"]),
            storage_per_row_hour={
                EngineId(e): v for e, v in doc["storage_per_row_hour"].items()
            },
            export_rate_bps={EngineId(e): float(v) for e, v in doc["export_rate_bps"].items()},
            import_rate_bps={EngineId(e): float(v) for e, v in doc["import_rate_bps"].items()},
            rowstore_change_s=float(doc.get("rowstore_change_s", 300.0)),
            elastic_resize_s=float(doc.get("elastic_resize_s", 900.0)),
            classic_resize_bps=float(doc.get("classic_resize_bps", 18.0 * MB)),
            transfer_price_per_tb=float(doc.get("transfer_price_per_tb", 0.0)),
        )


def load_pricing(path) -> PricingCatalog:
    with open(path, "r", encoding="utf-8") as f:
        return PricingCatalog.from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# Load state and the vector score
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadState:
    """Measured per-engine state over the last planning window."""

    utilization: Mapping[EngineId, float]
    observed_runtime_sum_s: Mapping[EngineId, float]
    mean_processing_s: Mapping[EngineId, float] = field(default_factory=dict)

    @classmethod
    def idle(cls) -> "LoadState":
        zero = {e: 0.0 for e in EngineId}
        return cls(utilization=dict(zero), observed_runtime_sum_s=dict(zero))


@dataclass(frozen=True, eq=False)
class VectorScore:
    """Multi-component utility of a candidate blueprint."""

    query_ids: tuple[str, ...]
    query_latencies: np.ndarray       # seconds, +inf for overloaded engines
    arrival_weights: np.ndarray       # executions/hour, percentile weights
    class_tags: tuple[str, ...]
    txn_latency: float                # seconds
    operating_cost: float             # dollars/hour
    transition_time_s: float
    transition_cost: float            # dollars
    blueprint_digest: Optional[str] = None

    @property
    def finite(self) -> bool:
        return (
            bool(np.all(np.isfinite(self.query_latencies)))
            and math.isfinite(self.txn_latency)
            and math.isfinite(self.operating_cost)
        )


@dataclass(frozen=True)
class ScoringModels:
    """Everything needed to score candidates: the run-time predictor plus the
    analytical adjustment models and the pricing catalog.
    """

    predictor: Predictor
    provisioning_constants: Mapping[EngineId, ProvisioningConstants]
    txn_constants: Optional[TxnModelConstants]
    pricing: PricingCatalog
    fallback_load_constant: float = FALLBACK_LOAD_CONSTANT
    overload_epsilon: float = OVERLOAD_EPSILON
    wait_percentile: float = WAIT_PERCENTILE


# ---------------------------------------------------------------------------
# Closed-form model pieces
# ---------------------------------------------------------------------------

def adjust_for_provisioning(g: float, consts: ProvisioningConstants, dest_vcpus: float) -> float:
    """Amdahl-style adjustment (c1 * (b/d) + c2) * G to the destination vcpus."""
    if dest_vcpus < 1:
        raise ValueError("destination vcpus must be >= 1")
    return (consts.c1 * (consts.base_vcpus / dest_vcpus) + consts.c2) * g


def queueing_delay(
    rho: float, k: float, q: float, eps: float = OVERLOAD_EPSILON
) -> float:
    """q-th percentile M/M/1 wait -K * (1-rho)^-1 * ln(rho^-1 * (1-q)); clamped
    to zero below rho = 1-q where the closed form goes negative.
    """
    if k <= 0:
        raise ValueError("mean processing time must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError("percentile must be in (0, 1)")
    if rho < 0.0 or rho >= 1.0 - eps:
        raise UtilizationOutOfRange(f"utilization {rho:.4f} beyond overload guard")
    if rho <= 1.0 - q:
        return 0.0
    return -k / (1.0 - rho) * math.log((1.0 - q) / rho)


def adjust_utilization(
    measured_rho: float,
    candidate_sum_s: float,
    observed_sum_s: float,
    fallback_constant: float = FALLBACK_LOAD_CONSTANT,
) -> float:
    """Scale measured utilization by the candidate/observed routed-runtime ratio;
    with nothing observed, fall back to the proportionality constant.
    """
    if candidate_sum_s < 0 or observed_sum_s < 0:
        raise ValueError("runtime sums must be nonnegative")
    if observed_sum_s > 0:
        rho = measured_rho * candidate_sum_s / observed_sum_s
    else:
        rho = fallback_constant * candidate_sum_s
    return min(1.0, max(0.0, rho))


def txn_latency(rho_t: float, consts: TxnModelConstants) -> float:
    """a / (M - rho_t) + b; diverges (Saturated) at the pole."""
    if rho_t >= consts.m:
        raise Saturated(f"transaction utilization {rho_t:.4f} >= M={consts.m:.4f}")
    return consts.a / (consts.m - rho_t) + consts.b


def adjust_txn_utilization(
    rho_t: float, current_vcpus: float, candidate_vcpus: float, query_load_factor: float
) -> float:
    if current_vcpus < 1 or candidate_vcpus < 1:
        raise ValueError("vcpu counts must be >= 1")
    return min(1.0, max(0.0, rho_t * (current_vcpus / candidate_vcpus) * query_load_factor))


def txn_query_load_factor(
    rho_t_meas: float,
    candidate_sum_s: float,
    observed_sum_s: float,
    window_s: float,
    fallback_constant: float = FALLBACK_LOAD_CONSTANT,
) -> float:
    """Routing-change factor for the transaction-utilization adjustment.

    Only the query-attributable share of measured utilization scales with the
    candidate/observed runtime ratio; the transactional remainder stays put.
    Scaling the whole rho_t lets a candidate mask txn saturation by routing
    queries away.
    """
    if rho_t_meas <= 0.0:
        return 1.0
    q_obs = min(observed_sum_s / window_s, rho_t_meas) if window_s > 0 else 0.0
    if observed_sum_s > 0.0:
        moved = q_obs * candidate_sum_s / observed_sum_s
    else:
        moved = fallback_constant * candidate_sum_s
    return (rho_t_meas - q_obs + moved) / rho_t_meas


def adjusted_runtime(
    models: ScoringModels, g: float, engine: EngineId, prov: Provisioning
) -> float:
    """Predicted runtime on an engine under a provisioning; inf when paused.

    The scan service is serverless: its base is the only provisioning, so its
    predictions pass through unadjusted.
    """
    if engine is EngineId.SCAN_SERVICE:
        return g
    if not prov.is_active:
        return math.inf
    return adjust_for_provisioning(g, models.provisioning_constants[engine], prov.total_vcpus)


# ---------------------------------------------------------------------------
# Operating cost and transition estimates
# ---------------------------------------------------------------------------

def operating_cost(
    bp: Blueprint,
    w: WorkloadWindow,
    pricing: PricingCatalog,
    scans: Mapping[str, float],
) -> float:
    """Dollars/hour: node-hours + scan-service query costs + storage. Paused
    engines stop billing nodes but keep paying storage for placed tables.
    """
    cost = sum(pricing.node_cost_per_hour(p) for p in bp.provisionings.values())
    per_byte = pricing.scan_price_per_byte
    for q in w.queries:
        if bp.routing.assignments.get(q.query_id) is EngineId.SCAN_SERVICE:
            cost += q.arrival_rate * scans[q.query_id] * per_byte
    for table, engines in bp.placement.placement.items():
        rows = w.catalog.table(table).row_count
        for e in engines:
            cost += pricing.storage_rate_per_hour(e, table, rows)
    return float(cost)


def rowstore_instance_changes(old: Provisioning, new: Provisioning) -> int:
    """Instance changes incurred by a row-store provisioning delta."""
    if new.instance_type != old.instance_type:
        return new.node_count
    return max(0, new.node_count - old.node_count)


def change_duration_s(
    change, pricing: PricingCatalog, warehouse_data_bytes: float
) -> float:
    """Seconds one provisioning change takes (pause and replica removal are free)."""
    kind = change.kind
    if kind in (ChangeKind.PAUSE, ChangeKind.REPLICA_REMOVE):
        return 0.0
    if change.engine is EngineId.ROW_STORE:
        return pricing.rowstore_change_s * rowstore_instance_changes(change.old, change.new)
    if kind is ChangeKind.CLASSIC_RESIZE:
        return warehouse_data_bytes / pricing.classic_resize_bps
    # Warehouse elastic resizes and unpauses take the published fixed time.
    return pricing.elastic_resize_s


def transition_time_cost(
    plan: TransitionPlan, pricing: PricingCatalog, warehouse_data_bytes: float
) -> tuple[float, float]:
    """(T_T seconds, C_T dollars). Each engine applies its provisioning change
    and inbound table imports serially; engines proceed in parallel, so T_T is
    the max engine-serial time. Moves cost S/k_e + S/k_i via the staging store.
    """
    serial: dict[EngineId, float] = {e: 0.0 for e in EngineId}
    cost = 0.0
    for change in plan.provisioning_changes:
        serial[change.engine] += change_duration_s(change, pricing, warehouse_data_bytes)
    per_byte = pricing.transfer_price_per_byte
    for move in plan.table_moves:
        k_e = pricing.export_rate_bps[move.source]
        k_i = pricing.import_rate_bps[move.dest]
        serial[move.dest] += move.size_bytes / k_e + move.size_bytes / k_i
        cost += move.size_bytes * per_byte
    t_t = max(serial.values()) if serial else 0.0
    return float(t_t), float(cost)


def warehouse_resident_bytes(bp: Blueprint, catalog: DatasetCatalog) -> float:
    """Physical bytes currently held by the warehouse (classic-resize scaling)."""
    total = 0.0
    for table, engines in bp.placement.placement.items():
        if EngineId.WAREHOUSE in engines:
            total += catalog.table(table).size_bytes
    return total


# ---------------------------------------------------------------------------
# Full vector score for one candidate
# ---------------------------------------------------------------------------

def score_blueprint(
    candidate: Blueprint,
    current: Blueprint,
    w: WorkloadWindow,
    models: ScoringModels,
    load: LoadState,
) -> VectorScore:
    """Assemble the candidate's VectorScore against the current blueprint.

    Every workload query must be assigned in the candidate. Engines whose
    adjusted utilization trips the overload guard contribute +inf latencies.
    """
    window_h = w.window_hours
    qids = w.ids()
    rates = w.rates()

    padj = np.empty(len(qids), dtype=float)
    engines_idx: list[EngineId] = []
    for i, q in enumerate(w.queries):
        e = candidate.routing.assignments.get(q.query_id)
        if e is None:
            raise ValueError(f"candidate blueprint leaves query {q.query_id} unassigned")
        engines_idx.append(e)
        g = models.predictor.predict_runtime(q, e)
        padj[i] = adjusted_runtime(models, g, e, candidate.provisionings[e])

    cand_sum = {e: 0.0 for e in EngineId}
    arrivals = {e: 0.0 for e in EngineId}
    for i, e in enumerate(engines_idx):
        if math.isfinite(padj[i]):
            cand_sum[e] += rates[i] * window_h * padj[i]
        arrivals[e] += rates[i] * window_h

    wait: dict[EngineId, float] = {}
    for e in EngineId:
        if e is EngineId.SCAN_SERVICE or arrivals[e] == 0.0:
            wait[e] = 0.0
            continue
        rho = adjust_utilization(
            load.utilization.get(e, 0.0),
            cand_sum[e],
            load.observed_runtime_sum_s.get(e, 0.0),
            models.fallback_load_constant,
        )
        k = cand_sum[e] / arrivals[e] if arrivals[e] > 0 else 0.0
        if k <= 0.0:
            wait[e] = 0.0
            continue
        try:
            wait[e] = queueing_delay(rho, k, models.wait_percentile, models.overload_epsilon)
        except UtilizationOutOfRange:
            wait[e] = math.inf

    latencies = np.array(
        [padj[i] + wait[engines_idx[i]] for i in range(len(qids))], dtype=float
    )

    if w.txn_rate_per_s > 0 and models.txn_constants is not None:
        rs_new = candidate.provisionings[EngineId.ROW_STORE]
        if not rs_new.is_active:
            txn = math.inf
        else:
            rho_meas = load.utilization.get(EngineId.ROW_STORE, 0.0)
            qlf = txn_query_load_factor(
                rho_meas,
                cand_sum[EngineId.ROW_STORE],
                load.observed_runtime_sum_s.get(EngineId.ROW_STORE, 0.0),
                window_h * 3600.0,
                models.fallback_load_constant,
            )
            cur_vcpus = max(1, current.provisionings[EngineId.ROW_STORE].total_vcpus)
            rho_t = adjust_txn_utilization(rho_meas, cur_vcpus, rs_new.total_vcpus, qlf)
            try:
                txn = txn_latency(rho_t, models.txn_constants)
            except Saturated:
                txn = math.inf
    else:
        txn = 0.0

    scans = {q.query_id: models.predictor.predict_bytes_scanned(q) for q in w.queries}
    cost = operating_cost(candidate, w, models.pricing, scans)

    plan = diff_blueprints(current, candidate, w.catalog)
    t_t, c_t = transition_time_cost(
        plan, models.pricing, warehouse_resident_bytes(current, w.catalog)
    )

    return VectorScore(
        query_ids=qids,
        query_latencies=latencies,
        arrival_weights=rates,
        class_tags=tuple(q.class_tag for q in w.queries),
        txn_latency=float(txn),
        operating_cost=cost,
        transition_time_s=t_t,
        transition_cost=c_t,
        blueprint_digest=candidate.digest(),
    )
