import json
from importlib import resources
from pathlib import Path

import pytest

from blueprintd.blueprint import (
    ENGINES,
    Blueprint,
    EngineId,
    Provisioning,
    RoutingPolicy,
    TablePlacement,
    serverless_provisioning,
)
from blueprintd.gen import default_pricing
from blueprintd.queryir import DatasetCatalog, Histogram, TableStats


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return Path(resources.files("blueprintd") / "scenarios")


@pytest.fixture(scope="session")
def pricing():
    return default_pricing()


def uniform_histogram(lo: float, hi: float, rows: int, distinct: int, buckets: int = 10):
    edges = tuple(lo + (hi - lo) * i / buckets for i in range(buckets + 1))
    per = rows // buckets
    counts = [float(per)] * buckets
    counts[-1] += rows - per * buckets
    return Histogram(
        kind="numeric", counts=tuple(counts), distinct=distinct,
        row_count=rows, boundaries=edges,
    )


@pytest.fixture
def tiny_catalog() -> DatasetCatalog:
    """Two tables with uniform histograms: t (1000 rows, a on [0,100)) and
    s (2000 rows, join key with 200 distinct values)."""
    return DatasetCatalog(
        tables={
            "t": TableStats(
                row_count=1000,
                size_bytes=1000.0 * 100,
                columns={
                    "a": uniform_histogram(0.0, 100.0, 1000, 100),
                    "id": uniform_histogram(0.0, 1000.0, 1000, 1000),
                },
            ),
            "s": TableStats(
                row_count=2000,
                size_bytes=2000.0 * 100,
                columns={
                    "b": uniform_histogram(0.0, 100.0, 2000, 50),
                    "id": uniform_histogram(0.0, 1000.0, 2000, 200),
                },
            ),
        }
    )


def provisioning_map(
    rs=("rs.medium", 1, 4), wh=("wh.node", 2, 4)
) -> dict:
    return {
        EngineId.ROW_STORE: Provisioning(EngineId.ROW_STORE, rs[0], rs[1], rs[2]),
        EngineId.WAREHOUSE: Provisioning(EngineId.WAREHOUSE, wh[0], wh[1], wh[2]),
        EngineId.SCAN_SERVICE: serverless_provisioning(),
    }


def blueprint_all_on(
    tables, engines, assignments=None, rs=("rs.medium", 1, 4), wh=("wh.node", 2, 4)
) -> Blueprint:
    placement = TablePlacement(
        placement={t: frozenset(engines) for t in tables},
        writer={t: EngineId.ROW_STORE for t in tables},
    )
    return Blueprint(
        engines=frozenset(ENGINES),
        provisionings=provisioning_map(rs=rs, wh=wh),
        placement=placement,
        routing=RoutingPolicy(assignments=dict(assignments or {})),
    )


def write_scenario_variant(scenario_dir: Path, tmp_path: Path, name: str, **overrides) -> Path:
    """Copy a packaged scenario (with its companion files) applying overrides."""
    doc = json.loads((scenario_dir / f"{name}.json").read_text())
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    for key in ("workload_file", "catalog_file", "pricing_file"):
        src = scenario_dir / doc[key]
        (tmp_path / doc[key]).write_text(src.read_text())
    out = tmp_path / f"{name}_variant.json"
    out.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return out
