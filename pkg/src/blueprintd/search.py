"""Blueprint search: greedy beam over query assignments per nearby provisioning,
plus the exhaustive / naive-greedy / random-sampling baselines used as oracles.

All strategies score candidates through the same batch kernel, so their scalar
scores are directly comparable (beam == exhaustive is meaningful equality).
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .blueprint import (
    ENGINE_INDEX,
    ENGINES,
    Blueprint,
    CapabilityConfig,
    EngineId,
    Provisioning,
    ProvisioningChange,
    RoutingPolicy,
    classify_change,
    derive_placement,
    serverless_provisioning,
    universal_engine,
)
from .comparator import CurrentMetrics, SloConfig, penalty
from .errors import NoFeasibleBlueprint, SearchSpaceTooLarge
from .queryir import WorkloadWindow
from .scoring import (
    LoadState,
    ScoringModels,
    adjusted_runtime,
    change_duration_s,
    warehouse_resident_bytes,
)

EXHAUSTIVE_GUARD = 10**7
DEFAULT_BEAM_WIDTH = 100
RANDOM_BASELINE_SAMPLES = 10_000

_SCAN_IDX = ENGINES.index(EngineId.SCAN_SERVICE)
_RS_IDX = ENGINES.index(EngineId.ROW_STORE)


# ---------------------------------------------------------------------------
# Provisioning lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProvisioningLattice:
    """Ordered instance types and allowed node counts per engine; neighbors are
    reachable within `radius` single steps (one step: +-1 type index, or node
    count one notch up/down, or pause; a paused engine may unpause at the
    smallest configuration).
    """

    instance_types: Mapping[EngineId, tuple[str, ...]]
    node_counts: Mapping[EngineId, tuple[int, ...]]
    vcpus: Mapping[EngineId, Mapping[str, int]]
    radius: int = 1

    @classmethod
    def from_pricing(
        cls,
        pricing,
        node_counts: Optional[Mapping[EngineId, Sequence[int]]] = None,
        radius: int = 1,
    ) -> "ProvisioningLattice":
        defaults = {
            EngineId.ROW_STORE: (1, 2),
            EngineId.WAREHOUSE: (2, 4, 8, 16, 32),
            EngineId.SCAN_SERVICE: (0,),
        }
        counts = dict(defaults)
        if node_counts:
            counts.update({e: tuple(v) for e, v in node_counts.items()})
        return cls(
            instance_types={e: pricing.ordered_types(e) for e in ENGINES},
            node_counts=counts,
            vcpus={e: {t: pricing.vcpus(e, t) for t in pricing.ordered_types(e)} for e in ENGINES},
            radius=radius,
        )

    def make(self, engine: EngineId, type_idx: int, node_count: int) -> Provisioning:
        itype = self.instance_types[engine][type_idx]
        return Provisioning(engine, itype, node_count, self.vcpus[engine][itype])

    def contains(self, prov: Provisioning) -> bool:
        types = self.instance_types[prov.engine]
        if prov.instance_type not in types:
            return False
        return prov.node_count == 0 or prov.node_count in self.node_counts[prov.engine]

    def _steps(self, engine: EngineId, state: tuple[int, int]) -> list[tuple[int, int]]:
        ti, n = state
        types = self.instance_types[engine]
        counts = self.node_counts[engine]
        if n == 0:
            # Unpause lands on the smallest instance at the smallest count.
            return [(0, counts[0])] if counts and counts[0] > 0 else []
        out = []
        if ti > 0:
            out.append((ti - 1, n))
        if ti < len(types) - 1:
            out.append((ti + 1, n))
        if n in counts:
            ci = counts.index(n)
            if ci > 0 and counts[ci - 1] > 0:
                out.append((ti, counts[ci - 1]))
            if ci < len(counts) - 1:
                out.append((ti, counts[ci + 1]))
        out.append((ti, 0))
        return out

    def engine_neighbors(self, current: Provisioning) -> list[Provisioning]:
        engine = current.engine
        if engine is EngineId.SCAN_SERVICE:
            return [serverless_provisioning()]
        start = (self.instance_types[engine].index(current.instance_type), current.node_count)
        frontier = {start}
        seen = {start}
        for _ in range(self.radius):
            nxt = set()
            for state in frontier:
                for step in self._steps(engine, state):
                    if step not in seen:
                        seen.add(step)
                        nxt.add(step)
            frontier = nxt
        return [self.make(engine, ti, n) for ti, n in sorted(seen)]


def enumerate_neighbor_provisionings(
    current: Mapping[EngineId, Provisioning], lattice: ProvisioningLattice
) -> list[dict[EngineId, Provisioning]]:
    """Cartesian product of per-engine neighbor sets, deduplicated, in a
    deterministic order. The current provisioning is its own neighbor.
    """
    for e in ENGINES:
        if not lattice.contains(current[e]):
            raise ValueError(f"current provisioning for {e} is not in the lattice")
    per_engine = [lattice.engine_neighbors(current[e]) for e in ENGINES]
    return [dict(zip(ENGINES, combo)) for combo in itertools.product(*per_engine)]


# ---------------------------------------------------------------------------
# Planning inputs and per-provisioning scoring context
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BatchScores:
    w: np.ndarray
    t_t: np.ndarray
    cost: np.ndarray
    feasible: np.ndarray
    p90: np.ndarray
    txn: np.ndarray

    def take(self, idx) -> "BatchScores":
        return BatchScores(
            self.w[idx], self.t_t[idx], self.cost[idx],
            self.feasible[idx], self.p90[idx], self.txn[idx],
        )


@dataclass(eq=False)
class PlanningInputs:
    """Per-planning-pass arrays shared by all provisioning contexts."""

    workload: WorkloadWindow
    current: Blueprint
    models: ScoringModels
    slo: SloConfig
    metrics: CurrentMetrics
    load: LoadState
    caps: Optional[CapabilityConfig] = None

    def __post_init__(self):
        w = self.workload
        self.qids = list(w.ids())
        self.rates = w.rates()
        n_q = len(self.qids)

        self.g = np.empty((n_q, 3))
        self.bytes_q = np.empty(n_q)
        for i, q in enumerate(w.queries):
            for ei, e in enumerate(ENGINES):
                self.g[i, ei] = self.models.predictor.predict_runtime(q, e)
            self.bytes_q[i] = self.models.predictor.predict_bytes_scanned(q)

        self.caps_allowed = np.ones((n_q, 3), dtype=bool)
        if self.caps:
            for i, q in enumerate(w.queries):
                for token in q.capability_tokens:
                    supported = self.caps.get(token)
                    if supported is None:
                        continue
                    for ei, e in enumerate(ENGINES):
                        if e not in supported:
                            self.caps_allowed[i, ei] = False

        class_names = sorted({q.class_tag for q in w.queries}) or [""]
        self.class_names = class_names
        self.class_idx = np.array(
            [class_names.index(q.class_tag) for q in w.queries], dtype=np.int64
        )
        self.class_slos = np.array([self.slo.query_slo_for(t) for t in class_names], dtype=float)

        self.tables = sorted(w.catalog.tables)
        tindex = {t: i for i, t in enumerate(self.tables)}
        indptr = [0]
        indices: list[int] = []
        for q in w.queries:
            for t in q.tables:
                indices.append(tindex[t])
            indptr.append(len(indices))
        self.tq_indptr = np.array(indptr, dtype=np.int64)
        self.tq_indices = np.array(indices, dtype=np.int64)

        pricing = self.models.pricing
        n_t = len(self.tables)
        self.writer = {
            t: self.current.placement.writer.get(t, EngineId.ROW_STORE) for t in self.tables
        }
        self.cur_placed = np.zeros((n_t, 3), dtype=bool)
        for t, engines in self.current.placement.placement.items():
            if t in tindex:
                for e in engines:
                    self.cur_placed[tindex[t], ENGINE_INDEX[e]] = True

        sizes = np.array([w.catalog.table(t).size_bytes for t in self.tables], dtype=float)
        self.storage_rate = np.empty((n_t, 3))
        move_time = np.empty((n_t, 3))
        for ti, t in enumerate(self.tables):
            stats = w.catalog.table(t)
            src = self.writer[t]
            for ei, e in enumerate(ENGINES):
                self.storage_rate[ti, ei] = pricing.storage_rate_per_hour(e, t, stats.row_count)
                move_time[ti, ei] = (
                    stats.size_bytes / pricing.export_rate_bps[src]
                    + stats.size_bytes / pricing.import_rate_bps[e]
                )
        self.extra_move_time = np.where(self.cur_placed, 0.0, move_time)
        move_cost = np.broadcast_to(
            sizes[:, None] * pricing.transfer_price_per_byte, (n_t, 3)
        )
        self.extra_move_cost = np.where(self.cur_placed, 0.0, move_cost)

        self.scan_cost_rate = self.rates * self.bytes_q * pricing.scan_price_per_byte
        self.warehouse_bytes = warehouse_resident_bytes(self.current, w.catalog)
        self.pen_gamma_c0 = (
            penalty(self.metrics, self.slo) ** self.slo.gamma
            * self.metrics.operating_cost_per_hour
        )
        self.t_b_h = self.slo.benefit_period_s / 3600.0

        self.measured_util = np.array(
            [self.load.utilization.get(e, 0.0) for e in ENGINES], dtype=float
        )
        self.observed_sum = np.array(
            [self.load.observed_runtime_sum_s.get(e, 0.0) for e in ENGINES], dtype=float
        )

    def query_order(self) -> list[int]:
        return order_queries(self.workload, self.g)

    def context(self, prov: Mapping[EngineId, Provisioning]) -> "ProvisioningContext":
        return ProvisioningContext(self, dict(prov))


@dataclass(eq=False)
class ProvisioningContext:
    """Kernel argument pack for one candidate provisioning."""

    inputs: PlanningInputs
    prov: dict[EngineId, Provisioning]

    def __post_init__(self):
        inp = self.inputs
        models = inp.models
        pricing = models.pricing
        n_q = len(inp.qids)
        n_t = len(inp.tables)

        padj = np.empty((n_q, 3))
        for ei, e in enumerate(ENGINES):
            p = self.prov[e]
            for qi in range(n_q):
                padj[qi, ei] = adjusted_runtime(models, inp.g[qi, ei], e, p)
        active = np.array([self.prov[e].is_active for e in ENGINES], dtype=bool)
        self.padj = padj
        self.allowed = inp.caps_allowed & active[None, :] & np.isfinite(padj)

        self.node_cost = float(sum(pricing.node_cost_per_hour(self.prov[e]) for e in ENGINES))
        prov_time = np.zeros(3)
        for ei, e in enumerate(ENGINES):
            old = inp.current.provisionings[e]
            kind = classify_change(e, old, self.prov[e])
            if kind is not None:
                change = ProvisioningChange(e, old, self.prov[e], kind)
                prov_time[ei] = change_duration_s(change, pricing, inp.warehouse_bytes)
        self.prov_time = prov_time

        uni = universal_engine(self.prov)
        self.universal = uni
        base_placed = np.zeros((n_t, 3), dtype=bool)
        for ti, t in enumerate(inp.tables):
            base_placed[ti, ENGINE_INDEX[inp.writer[t]]] = True
            base_placed[ti, ENGINE_INDEX[uni]] = True
        self.base_placed = base_placed
        self.base_storage = float(np.sum(np.where(base_placed, inp.storage_rate, 0.0)))
        self.base_move_time = np.array(
            [
                float(np.sum(np.where(base_placed[:, ei], inp.extra_move_time[:, ei], 0.0)))
                for ei in range(3)
            ]
        )
        self.base_move_cost = float(np.sum(np.where(base_placed, inp.extra_move_cost, 0.0)))

        rs = self.prov[EngineId.ROW_STORE]
        self.rowstore_active = bool(rs.is_active)
        cur_rs = max(1, inp.current.provisionings[EngineId.ROW_STORE].total_vcpus)
        self.txn_vcpu_ratio = cur_rs / rs.total_vcpus if rs.is_active else 0.0
        txn = models.txn_constants
        self.kernel_args = (
            padj,
            self.allowed,
            inp.rates,
            inp.class_idx,
            inp.class_slos,
            inp.scan_cost_rate,
            inp.tq_indptr,
            inp.tq_indices,
            base_placed,
            inp.extra_move_time,
            inp.extra_move_cost,
            inp.storage_rate,
            self.base_storage,
            self.base_move_time,
            self.base_move_cost,
            self.node_cost,
            self.prov_time,
            0.0,
            inp.measured_util,
            inp.observed_sum,
            float(models.fallback_load_constant),
            float(inp.workload.window_hours),
            float(models.wait_percentile),
            float(models.overload_epsilon),
            _SCAN_IDX,
            float(inp.workload.txn_rate_per_s),
            float(inp.load.utilization.get(EngineId.ROW_STORE, 0.0)),
            float(self.txn_vcpu_ratio),
            float(txn.a) if txn else 0.0,
            float(txn.b) if txn else 0.0,
            float(txn.m) if txn else 1.0,
            float(inp.slo.txn_p90_s),
            _RS_IDX,
            self.rowstore_active,
            float(inp.pen_gamma_c0),
            float(inp.t_b_h),
        )
        self._digest_prefix = repr(
            tuple((e.value, self.prov[e].instance_type, self.prov[e].node_count) for e in ENGINES)
        ).encode()

    def score_batch(self, assign: np.ndarray) -> BatchScores:
        assign = np.ascontiguousarray(assign, dtype=np.int8)
        return BatchScores(*kernels.score_batch(assign, *self.kernel_args))

    def digest(self, assign_row: np.ndarray) -> str:
        h = hashlib.sha256(self._digest_prefix)
        h.update(np.ascontiguousarray(assign_row, dtype=np.int8).tobytes())
        return h.hexdigest()[:16]

    def blueprint(self, assign_row: np.ndarray) -> Blueprint:
        inp = self.inputs
        assignments = {
            inp.qids[i]: ENGINES[int(assign_row[i])]
            for i in range(len(inp.qids))
            if assign_row[i] >= 0
        }
        placement = derive_placement(
            inp.workload.queries, assignments, inp.tables, inp.writer, self.universal
        )
        return Blueprint(
            engines=frozenset(ENGINES),
            provisionings=dict(self.prov),
            placement=placement,
            routing=RoutingPolicy(assignments=assignments),
        )


# ---------------------------------------------------------------------------
# Query ordering and deterministic selection helpers
# ---------------------------------------------------------------------------

def order_queries(w: WorkloadWindow, predicted: np.ndarray) -> list[int]:
    """Arrival rate descending, then cross-engine speedup (max/min predicted
    runtime) descending, then query id for determinism.
    """
    speedup = []
    for i in range(predicted.shape[0]):
        row = predicted[i]
        finite = row[np.isfinite(row)]
        if finite.size == 0 or finite.min() <= 0:
            speedup.append(1.0)
        else:
            speedup.append(float(finite.max() / finite.min()))
    return sorted(
        range(len(w.queries)),
        key=lambda i: (-w.queries[i].arrival_rate, -speedup[i], w.queries[i].query_id),
    )


def _best_index(scores: BatchScores, ctx: ProvisioningContext, rows: np.ndarray) -> int:
    """Argmin by (W, T_T, C); exact ties broken by blueprint digest."""
    cand = np.flatnonzero(scores.w == scores.w.min())
    if cand.size > 1:
        tt = scores.t_t[cand]
        cand = cand[tt == tt.min()]
    if cand.size > 1:
        c = scores.cost[cand]
        cand = cand[c == c.min()]
    if cand.size > 1:
        digests = [ctx.digest(rows[i]) for i in cand]
        cand = cand[[min(range(len(digests)), key=digests.__getitem__)]]
    return int(cand[0])


def _top_k(scores: BatchScores, ctx: ProvisioningContext, rows: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top-k rows by (W, T_T, C); boundary ties broken by digest."""
    n = len(scores.w)
    order = np.lexsort((scores.cost, scores.t_t, scores.w))
    if n <= k:
        return order

    def key(i: int):
        return (scores.w[i], scores.t_t[i], scores.cost[i])

    boundary = key(order[k - 1])
    lo = k - 1
    while lo > 0 and key(order[lo - 1]) == boundary:
        lo -= 1
    hi = k
    while hi < n and key(order[hi]) == boundary:
        hi += 1
    if hi == k:
        return order[:k]
    group = sorted(order[lo:hi], key=lambda i: ctx.digest(rows[i]))
    return np.concatenate([order[:lo], np.array(group[: k - lo], dtype=order.dtype)])


# ---------------------------------------------------------------------------
# Search strategies
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SearchOutcome:
    assign: np.ndarray
    w: float
    t_t: float
    cost: float
    context: ProvisioningContext
    candidates_scored: int

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.w)

    def digest(self) -> str:
        return self.context.digest(self.assign)


def beam_search(
    inputs: PlanningInputs,
    prov: Mapping[EngineId, Provisioning],
    k: int = DEFAULT_BEAM_WIDTH,
    order: Optional[Sequence[int]] = None,
) -> SearchOutcome:
    """Greedy beam over query assignments for one provisioning: extend every
    beam entry with each allowed engine per query, keep the top-k by the
    comparator order, return the best complete candidate.

    Raises NoFeasibleBlueprint when every complete candidate is infeasible or
    a query has no allowed engine on this provisioning.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    ctx = inputs.context(prov)
    n_q = len(inputs.qids)
    if order is None:
        order = inputs.query_order()

    beam = np.full((1, n_q), -1, dtype=np.int8)
    scores = ctx.score_batch(beam)
    scored = 1
    for qi in order:
        engines = np.flatnonzero(ctx.allowed[qi])
        if engines.size == 0:
            raise NoFeasibleBlueprint(
                f"query {inputs.qids[qi]} has no allowed engine on this provisioning"
            )
        children = np.repeat(beam, engines.size, axis=0)
        children[:, qi] = np.tile(engines.astype(np.int8), beam.shape[0])
        child_scores = ctx.score_batch(children)
        scored += children.shape[0]
        keep = _top_k(child_scores, ctx, children, k)
        beam = children[keep]
        scores = child_scores.take(keep)

    best = _best_index(scores, ctx, beam)
    outcome = SearchOutcome(
        assign=beam[best],
        w=float(scores.w[best]),
        t_t=float(scores.t_t[best]),
        cost=float(scores.cost[best]),
        context=ctx,
        candidates_scored=scored,
    )
    if not outcome.feasible:
        raise NoFeasibleBlueprint("all beam candidates violate the SLOs")
    return outcome


def _all_assignments(n_q: int) -> np.ndarray:
    n = 3**n_q
    rows = np.empty((n, n_q), dtype=np.int8)
    idx = np.arange(n)
    for q in range(n_q):
        rows[:, n_q - 1 - q] = (idx // 3**q) % 3
    return rows


def exhaustive_for_provisioning(
    inputs: PlanningInputs, prov: Mapping[EngineId, Provisioning]
) -> SearchOutcome:
    """Score every assignment vector for one provisioning (test oracle)."""
    n_q = len(inputs.qids)
    if 3**n_q > EXHAUSTIVE_GUARD:
        raise SearchSpaceTooLarge(f"3^{n_q} assignments exceed the guard")
    ctx = inputs.context(prov)
    rows = _all_assignments(n_q)
    scores = ctx.score_batch(rows)
    best = _best_index(scores, ctx, rows)
    outcome = SearchOutcome(
        assign=rows[best],
        w=float(scores.w[best]),
        t_t=float(scores.t_t[best]),
        cost=float(scores.cost[best]),
        context=ctx,
        candidates_scored=rows.shape[0],
    )
    if not outcome.feasible:
        raise NoFeasibleBlueprint("every assignment violates the SLOs")
    return outcome


def _pick_overall(outcomes: list[SearchOutcome]) -> SearchOutcome:
    return min(outcomes, key=lambda o: (o.w, o.t_t, o.cost, o.digest()))


def exhaustive_search(
    inputs: PlanningInputs, lattice: ProvisioningLattice
) -> tuple[Blueprint, SearchOutcome]:
    """Global optimum over all neighbor provisionings x all assignments."""
    provs = enumerate_neighbor_provisionings(
        {e: inputs.current.provisionings[e] for e in ENGINES}, lattice
    )
    n_q = len(inputs.qids)
    if 3**n_q * len(provs) > EXHAUSTIVE_GUARD:
        raise SearchSpaceTooLarge(f"3^{n_q} x {len(provs)} provisionings exceed the guard")
    outcomes = []
    for prov in provs:
        try:
            outcomes.append(exhaustive_for_provisioning(inputs, prov))
        except NoFeasibleBlueprint:
            continue
    if not outcomes:
        raise NoFeasibleBlueprint("no feasible blueprint in the search space")
    best = _pick_overall(outcomes)
    return best.context.blueprint(best.assign), best


def naive_greedy(inputs: PlanningInputs) -> SearchOutcome:
    """Each query goes to its fastest predicted engine on the current
    provisioning, ignoring every other query (baseline).
    """
    ctx = inputs.context({e: inputs.current.provisionings[e] for e in ENGINES})
    n_q = len(inputs.qids)
    assign = np.empty((1, n_q), dtype=np.int8)
    for qi in range(n_q):
        padj = np.where(ctx.allowed[qi], ctx.padj[qi], math.inf)
        assign[0, qi] = int(np.argmin(padj))
    scores = ctx.score_batch(assign)
    return SearchOutcome(
        assign=assign[0], w=float(scores.w[0]), t_t=float(scores.t_t[0]),
        cost=float(scores.cost[0]), context=ctx, candidates_scored=1,
    )


def random_baseline(
    inputs: PlanningInputs, samples: int = RANDOM_BASELINE_SAMPLES, seed: int = 0
) -> SearchOutcome:
    """Best of `samples` uniformly random valid assignments on the current
    provisioning (the sampling baseline).
    """
    ctx = inputs.context({e: inputs.current.provisionings[e] for e in ENGINES})
    n_q = len(inputs.qids)
    rng = np.random.default_rng(seed)
    rows = np.empty((samples, n_q), dtype=np.int8)
    for qi in range(n_q):
        engines = np.flatnonzero(ctx.allowed[qi])
        if engines.size == 0:
            raise NoFeasibleBlueprint(f"query {inputs.qids[qi]} has no allowed engine")
        rows[:, qi] = engines[rng.integers(0, engines.size, size=samples)].astype(np.int8)
    scores = ctx.score_batch(rows)
    best = _best_index(scores, ctx, rows)
    return SearchOutcome(
        assign=rows[best], w=float(scores.w[best]), t_t=float(scores.t_t[best]),
        cost=float(scores.cost[best]), context=ctx, candidates_scored=samples,
    )


# ---------------------------------------------------------------------------
# The full planning pass
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PlanResult:
    blueprint: Blueprint
    w: float
    outcome: SearchOutcome
    candidates_scored: int
    provisionings_tried: int

    def report(self) -> dict:
        return {
            "blueprint": self.blueprint.to_json_dict(),
            "digest": self.blueprint.digest(),
            "w_dollars": self.w,
            "operating_cost_per_hour": self.outcome.cost,
            "transition_time_s": self.outcome.t_t,
            "candidates_scored": self.candidates_scored,
            "provisionings_tried": self.provisionings_tried,
        }


def plan(
    inputs: PlanningInputs,
    lattice: ProvisioningLattice,
    k: int = DEFAULT_BEAM_WIDTH,
    router_cfg=None,
) -> PlanResult:
    """Beam search per neighbor provisioning; best overall wins. Optionally
    trains the online routing forest on the chosen blueprint's predictions.
    """
    provs = enumerate_neighbor_provisionings(
        {e: inputs.current.provisionings[e] for e in ENGINES}, lattice
    )
    order = inputs.query_order()
    outcomes: list[SearchOutcome] = []
    scored = 0
    for prov in provs:
        try:
            outcome = beam_search(inputs, prov, k=k, order=order)
        except NoFeasibleBlueprint:
            continue
        scored += outcome.candidates_scored
        outcomes.append(outcome)
    if not outcomes:
        raise NoFeasibleBlueprint("no neighbor provisioning admits a feasible blueprint")
    best = _pick_overall(outcomes)
    bp = best.context.blueprint(best.assign)
    if router_cfg is not None:
        from .router import train_routing_forest

        predicted = {}
        for i, q in enumerate(inputs.workload.queries):
            for ei, e in enumerate(ENGINES):
                value = best.context.padj[i, ei]
                predicted[(q.query_id, e)] = float(value) if np.isfinite(value) else 1e18
        forest = train_routing_forest(inputs.workload, predicted, router_cfg)
        bp = Blueprint(
            engines=bp.engines,
            provisionings=bp.provisionings,
            placement=bp.placement,
            routing=RoutingPolicy(assignments=bp.routing.assignments, online_policy=forest),
        )
    return PlanResult(
        blueprint=bp,
        w=best.w,
        outcome=best,
        candidates_scored=scored,
        provisionings_tried=len(provs),
    )
