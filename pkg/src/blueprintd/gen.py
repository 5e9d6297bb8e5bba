"""Seeded synthetic generators: catalogs, workloads, search instances, and the
separable routing workload. Everything flows through the SQL parser so the
generated queries exercise the same code paths as file-loaded ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .blueprint import (
    ENGINES,
    Blueprint,
    EngineId,
    Provisioning,
    RoutingPolicy,
    derive_placement,
    serverless_provisioning,
)
from .comparator import CurrentMetrics, SloConfig
from .predictor import OraclePredictor, ProvisioningConstants, TxnModelConstants
from .queryir import (
    DatasetCatalog,
    Histogram,
    LogicalQuery,
    TableStats,
    WorkloadWindow,
    parse_query,
    with_rate,
)
from .scoring import (
    InstancePrice,
    LoadState,
    PricingCatalog,
    ScoringModels,
    adjusted_runtime,
    txn_latency,
)
from .search import PlanningInputs, ProvisioningLattice
from .simulator import EngineGroundTruth, GroundTruthCoefficients
from .stats import percentile

BYTES_PER_ROW = 240


def make_catalog(n_tables: int, seed: int, min_rows: int = 50_000,
                 max_rows: int = 5_000_000) -> DatasetCatalog:
    """Tables t0..tn with a join key `id`, a uniform value column `v` on
    [0, 100), and a low-cardinality column `grp`.
    """
    rng = np.random.default_rng(seed)
    tables = {}
    for i in range(n_tables):
        rows = int(np.exp(rng.uniform(math.log(min_rows), math.log(max_rows))))
        distinct_grp = int(rng.integers(8, 64))
        edges = tuple(np.linspace(0.0, 100.0, 17))
        per_bucket = rows // 16
        counts = [per_bucket] * 16
        counts[-1] += rows - per_bucket * 16
        tables[f"t{i}"] = TableStats(
            row_count=rows,
            size_bytes=float(rows * BYTES_PER_ROW),
            columns={
                "id": Histogram(
                    kind="numeric",
                    counts=tuple(float(c) for c in counts),
                    distinct=rows,
                    row_count=rows,
                    boundaries=edges,
                ),
                "v": Histogram(
                    kind="numeric",
                    counts=tuple(float(c) for c in counts),
                    distinct=min(rows, 10_000),
                    row_count=rows,
                    boundaries=edges,
                ),
                "grp": Histogram(
                    kind="numeric",
                    counts=tuple(float(c) for c in counts),
                    distinct=distinct_grp,
                    row_count=rows,
                    boundaries=edges,
                ),
            },
        )
    return DatasetCatalog(tables=tables)


def make_queries(
    catalog: DatasetCatalog,
    n: int,
    seed: int,
    join_fraction: float = 0.35,
    agg_fraction: float = 0.3,
    rate_range: tuple[float, float] = (4.0, 80.0),
) -> list[LogicalQuery]:
    """Random supported-subset queries with skewed arrival rates."""
    rng = np.random.default_rng(seed)
    names = sorted(catalog.tables)
    out: list[LogicalQuery] = []
    seen: set[str] = set()
    while len(out) < n:
        threshold = float(np.round(rng.uniform(2.0, 98.0), 2))
        if rng.uniform() < join_fraction and len(names) >= 2:
            a, b = rng.choice(len(names), size=2, replace=False)
            ta, tb = names[int(a)], names[int(b)]
            sql = (
                f"SELECT {ta}.v FROM {ta}, {tb} "
                f"WHERE {ta}.id = {tb}.id AND {ta}.v < {threshold}"
            )
        else:
            t = names[int(rng.integers(0, len(names)))]
            op = "<" if rng.uniform() < 0.7 else ">"
            if rng.uniform() < agg_fraction:
                sql = f"SELECT COUNT(*) FROM {t} WHERE {t}.v {op} {threshold} GROUP BY {t}.grp"
            else:
                sql = f"SELECT {t}.v FROM {t} WHERE {t}.v {op} {threshold}"
        q = parse_query(sql)
        if q.query_id in seen:
            continue
        seen.add(q.query_id)
        rate = float(np.round(np.exp(rng.uniform(*np.log(rate_range))), 1))
        out.append(with_rate(q, rate))
    return out


def default_pricing() -> PricingCatalog:
    return PricingCatalog(
        instance_prices={
            EngineId.ROW_STORE: {
                "rs.small": InstancePrice(0.25, 2),
                "rs.medium": InstancePrice(0.50, 4),
                "rs.large": InstancePrice(0.95, 8),
                "rs.xlarge": InstancePrice(1.80, 16),
            },
            EngineId.WAREHOUSE: {
                "wh.node": InstancePrice(0.55, 4),
                "wh.big": InstancePrice(2.10, 16),
            },
            EngineId.SCAN_SERVICE: {"serverless": InstancePrice(0.0, 1)},
        },
        scan_price_per_tb=5.0,
        storage_per_row_hour={
            EngineId.ROW_STORE: 2.0e-9,
            EngineId.WAREHOUSE: 1.2e-9,
            EngineId.SCAN_SERVICE: 5.0e-10,
        },
        export_rate_bps={
            EngineId.ROW_STORE: 80.0 * 2**20,
            EngineId.WAREHOUSE: 150.0 * 2**20,
            EngineId.SCAN_SERVICE: 200.0 * 2**20,
        },
        import_rate_bps={
            EngineId.ROW_STORE: 40.0 * 2**20,
            EngineId.WAREHOUSE: 100.0 * 2**20,
            EngineId.SCAN_SERVICE: 200.0 * 2**20,
        },
    )


def default_provisioning_constants() -> dict:
    return {
        EngineId.ROW_STORE: ProvisioningConstants(c1=0.7, c2=0.3, base_vcpus=4),
        EngineId.WAREHOUSE: ProvisioningConstants(c1=0.8, c2=0.2, base_vcpus=8),
        EngineId.SCAN_SERVICE: ProvisioningConstants(c1=0.0, c2=1.0, base_vcpus=1),
    }


def default_ground_truth_coefficients(rng: Optional[np.random.Generator] = None) -> dict:
    def u(lo, hi):
        return float(rng.uniform(lo, hi)) if rng is not None else (lo + hi) / 2.0

    return {
        EngineId.ROW_STORE: GroundTruthCoefficients(
            base_s=u(0.05, 0.15), per_million_rows_s=u(2.0, 6.0),
            per_join_s=u(0.5, 1.5), jitter=0.15,
        ),
        EngineId.WAREHOUSE: GroundTruthCoefficients(
            base_s=u(0.5, 1.0), per_million_rows_s=u(0.10, 0.30),
            per_join_s=u(0.2, 0.5), jitter=0.15,
        ),
        EngineId.SCAN_SERVICE: GroundTruthCoefficients(
            base_s=u(1.5, 2.5), per_million_rows_s=u(0.2, 0.5),
            per_join_s=u(0.3, 0.6), jitter=0.15,
        ),
    }


@dataclass(eq=False)
class SearchInstance:
    """A complete planning problem: inputs + lattice, ready for any strategy."""

    inputs: PlanningInputs
    lattice: ProvisioningLattice
    truth: EngineGroundTruth


def make_search_instance(seed: int, n_queries: Optional[int] = None) -> SearchInstance:
    """Planning instance in the exhaustive-oracle regime (8-12 queries,
    conventional-wisdom current blueprint with everything on the warehouse).
    """
    rng = np.random.default_rng(seed)
    if n_queries is None:
        n_queries = int(rng.integers(8, 13))
    catalog = make_catalog(int(rng.integers(3, 6)), seed=seed + 1)
    queries = make_queries(catalog, n_queries, seed=seed + 2)
    truth = EngineGroundTruth.generate(
        queries, catalog, default_ground_truth_coefficients(rng), seed=seed + 3
    )
    pricing = default_pricing()
    prov_consts = default_provisioning_constants()
    txn_consts = TxnModelConstants(a=0.004, b=0.004, m=1.1)
    txn_rate = float(rng.uniform(20.0, 120.0))

    current_prov = {
        EngineId.ROW_STORE: Provisioning(EngineId.ROW_STORE, "rs.medium", 1, 4),
        EngineId.WAREHOUSE: Provisioning(EngineId.WAREHOUSE, "wh.node", 2, 4),
        EngineId.SCAN_SERVICE: serverless_provisioning(),
    }
    assignments = {q.query_id: EngineId.WAREHOUSE for q in queries}
    writer = {t: EngineId.ROW_STORE for t in catalog.tables}
    placement = derive_placement(queries, assignments, catalog.tables, writer,
                                 EngineId.ROW_STORE)
    current = Blueprint(
        engines=frozenset(ENGINES),
        provisionings=current_prov,
        placement=placement,
        routing=RoutingPolicy(assignments=assignments),
    )

    models = ScoringModels(
        predictor=OraclePredictor(truth),
        provisioning_constants=prov_consts,
        txn_constants=txn_consts,
        pricing=pricing,
    )
    rates = np.array([q.arrival_rate for q in queries])
    padj_wh = np.array(
        [
            adjusted_runtime(
                models, truth.base_runtime(q.query_id, EngineId.WAREHOUSE),
                EngineId.WAREHOUSE, current_prov[EngineId.WAREHOUSE],
            )
            for q in queries
        ]
    )
    observed_wh = float(np.sum(rates * padj_wh))
    txn_util = min(0.6, txn_rate * 0.0024 * (4 / current_prov[EngineId.ROW_STORE].total_vcpus))
    load = LoadState(
        utilization={
            EngineId.ROW_STORE: txn_util,
            EngineId.WAREHOUSE: min(0.9, observed_wh / 3600.0),
            EngineId.SCAN_SERVICE: 0.0,
        },
        observed_runtime_sum_s={
            EngineId.ROW_STORE: 0.0,
            EngineId.WAREHOUSE: observed_wh,
            EngineId.SCAN_SERVICE: 0.0,
        },
    )
    slo = SloConfig(txn_p90_s=0.03, query_p90_s=30.0, benefit_period_s=24 * 3600.0)
    metrics = CurrentMetrics(
        txn_p90_s=txn_latency(txn_util, txn_consts),
        query_p90_s=float(percentile(padj_wh, 0.9, rates)),
        operating_cost_per_hour=float(
            sum(pricing.node_cost_per_hour(p) for p in current_prov.values())
        ),
    )
    workload = WorkloadWindow(
        queries=tuple(queries), txn_rate_per_s=txn_rate, catalog=catalog, window_hours=1.0
    )
    inputs = PlanningInputs(
        workload=workload, current=current, models=models,
        slo=slo, metrics=metrics, load=load, caps=None,
    )
    lattice = ProvisioningLattice.from_pricing(
        pricing,
        node_counts={EngineId.ROW_STORE: (1,), EngineId.WAREHOUSE: (2, 4)},
        radius=1,
    )
    return SearchInstance(inputs=inputs, lattice=lattice, truth=truth)


def make_separable_workload(
    n: int, seed: int
) -> tuple[WorkloadWindow, EngineGroundTruth]:
    """Routing benchmark workload: small scans are fastest on the row store,
    large ones on the warehouse, with a clean cardinality threshold between.
    """
    rng = np.random.default_rng(seed)
    catalog = make_catalog(6, seed=seed + 1, min_rows=100_000, max_rows=20_000_000)
    names = sorted(catalog.tables)
    queries: list[LogicalQuery] = []
    seen: set[str] = set()
    while len(queries) < n:
        t = names[int(rng.integers(0, len(names)))]
        threshold = float(np.round(rng.uniform(0.5, 99.5), 3))
        op = "<" if rng.uniform() < 0.5 else ">"
        sql = f"SELECT {t}.v FROM {t} WHERE {t}.v {op} {threshold}"
        q = parse_query(sql)
        if q.query_id in seen:
            continue
        seen.add(q.query_id)
        queries.append(with_rate(q, float(np.round(rng.uniform(1.0, 30.0), 1))))
    coefficients = {
        EngineId.ROW_STORE: GroundTruthCoefficients(
            base_s=0.05, per_million_rows_s=4.0, per_join_s=1.0, jitter=0.05
        ),
        EngineId.WAREHOUSE: GroundTruthCoefficients(
            base_s=0.8, per_million_rows_s=0.15, per_join_s=0.3, jitter=0.05
        ),
        EngineId.SCAN_SERVICE: GroundTruthCoefficients(
            base_s=2.0, per_million_rows_s=0.5, per_join_s=0.5, jitter=0.05
        ),
    }
    truth = EngineGroundTruth.generate(queries, catalog, coefficients, seed=seed + 2)
    workload = WorkloadWindow(
        queries=tuple(queries), txn_rate_per_s=0.0, catalog=catalog, window_hours=1.0
    )
    return workload, truth
