"""Blueprint data model: engines, provisionings, table placement, routing policy.

A blueprint is the unit of search: which engines run, how they are provisioned,
where each table lives, and where each known query is routed. Blueprints are
value objects; construction and diffing never mutate their inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Optional

from .errors import EmptyEligibleSet

if TYPE_CHECKING:  # pragma: no cover
    from .queryir import DatasetCatalog, LogicalQuery
    from .router import RoutingForest


class EngineId(str, Enum):
    ROW_STORE = "row_store"      # transactional store, sole writer engine
    WAREHOUSE = "warehouse"      # provisioned analytical cluster
    SCAN_SERVICE = "scan_service"  # serverless, pay-per-byte-scanned

    def __str__(self) -> str:
        return self.value


ENGINES: tuple[EngineId, ...] = (EngineId.ROW_STORE, EngineId.WAREHOUSE, EngineId.SCAN_SERVICE)
ENGINE_INDEX: dict[EngineId, int] = {e: i for i, e in enumerate(ENGINES)}
SERVERLESS_INSTANCE = "serverless"

# Capability keywords scanned for by default when parsing raw SQL.
DEFAULT_CAPABILITY_KEYWORDS: tuple[str, ...] = ("<=>",)

CapabilityConfig = Mapping[str, frozenset]


class ChangeKind(str, Enum):
    INSTANCE_CHANGE = "instance_change"
    ELASTIC_RESIZE = "elastic_resize"
    CLASSIC_RESIZE = "classic_resize"
    PAUSE = "pause"
    UNPAUSE = "unpause"
    REPLICA_REMOVE = "replica_remove"


@dataclass(frozen=True)
class Provisioning:
    """An engine's resource configuration. node_count == 0 means paused/off."""

    engine: EngineId
    instance_type: str
    node_count: int
    vcpus_per_node: int

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be nonnegative")
        if self.vcpus_per_node < 1:
            raise ValueError("vcpus_per_node must be positive")

    @property
    def total_vcpus(self) -> int:
        return self.node_count * self.vcpus_per_node

    @property
    def is_active(self) -> bool:
        # The scan service is serverless: always available at node_count 0.
        return self.engine is EngineId.SCAN_SERVICE or self.node_count > 0


def serverless_provisioning() -> Provisioning:
    return Provisioning(EngineId.SCAN_SERVICE, SERVERLESS_INSTANCE, 0, 1)


@dataclass(frozen=True)
class TablePlacement:
    """Which engines hold each table, and the unique writer per table."""

    placement: Mapping[str, frozenset]
    writer: Mapping[str, EngineId]

    def engines_for(self, table: str) -> frozenset:
        return self.placement.get(table, frozenset())

    def tables(self) -> tuple[str, ...]:
        return tuple(sorted(self.placement))


@dataclass(frozen=True)
class RoutingPolicy:
    """Pre-planned query assignments plus the optional online routing forest."""

    assignments: Mapping[str, EngineId]
    online_policy: Optional["RoutingForest"] = None


@dataclass(frozen=True)
class Blueprint:
    engines: frozenset
    provisionings: Mapping[EngineId, Provisioning]
    placement: TablePlacement
    routing: RoutingPolicy

    def provisioning(self, engine: EngineId) -> Provisioning:
        return self.provisionings[engine]

    def active_engines(self) -> frozenset:
        return frozenset(e for e in self.engines if self.provisionings[e].is_active)

    def to_json_dict(self) -> dict:
        return {
            "engines": sorted(e.value for e in self.engines),
            "provisionings": {
                e.value: {
                    "instance_type": p.instance_type,
                    "node_count": p.node_count,
                    "vcpus_per_node": p.vcpus_per_node,
                }
                for e, p in sorted(self.provisionings.items(), key=lambda kv: kv[0].value)
            },
            "placement": {
                t: sorted(e.value for e in es) for t, es in sorted(self.placement.placement.items())
            },
            "writer": {t: e.value for t, e in sorted(self.placement.writer.items())},
            "assignments": {q: e.value for q, e in sorted(self.routing.assignments.items())},
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any]) -> "Blueprint":
        engines = frozenset(EngineId(e) for e in doc["engines"])
        provisionings = {
            EngineId(e): Provisioning(
                EngineId(e), p["instance_type"], int(p["node_count"]), int(p["vcpus_per_node"])
            )
            for e, p in doc["provisionings"].items()
        }
        placement = TablePlacement(
            placement={t: frozenset(EngineId(e) for e in es) for t, es in doc["placement"].items()},
            writer={t: EngineId(e) for t, e in doc.get("writer", {}).items()},
        )
        routing = RoutingPolicy(
            assignments={q: EngineId(e) for q, e in doc.get("assignments", {}).items()}
        )
        return cls(engines=engines, provisionings=provisionings, placement=placement, routing=routing)

    def digest(self) -> str:
        """Deterministic content hash; ignores the trained online policy."""
        payload = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TableMove:
    table: str
    source: EngineId
    dest: EngineId
    size_bytes: float


@dataclass(frozen=True)
class ProvisioningChange:
    engine: EngineId
    old: Provisioning
    new: Provisioning
    kind: ChangeKind


@dataclass(frozen=True)
class TransitionPlan:
    table_moves: tuple[TableMove, ...]
    provisioning_changes: tuple[ProvisioningChange, ...]

    @property
    def empty(self) -> bool:
        return not self.table_moves and not self.provisioning_changes


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> tuple[str, ...]:
        return tuple(v.rule for v in self.violations)


def validate_blueprint(bp: Blueprint, catalog: "DatasetCatalog") -> ValidationReport:
    """Check every structural invariant. Violations are data, not exceptions."""
    bad: list[Violation] = []

    missing = set(bp.engines) - set(bp.provisionings)
    extra = set(bp.provisionings) - set(bp.engines)
    for e in sorted(missing, key=lambda x: x.value):
        bad.append(Violation("provisioning missing", f"engine {e} has no provisioning"))
    for e in sorted(extra, key=lambda x: x.value):
        bad.append(Violation("provisioning extra", f"provisioning for {e} outside engine set"))

    for e, p in bp.provisionings.items():
        if e is EngineId.SCAN_SERVICE and p.node_count != 0:
            bad.append(Violation("scan service provisioned", "scan service must keep node_count 0"))

    tables = sorted(catalog.tables)
    for t in tables:
        holders = bp.placement.engines_for(t)
        if not holders:
            bad.append(Violation("unplaced table", f"table {t} placed on no engine"))
            continue
        outside = holders - bp.engines
        if outside:
            names = ",".join(sorted(e.value for e in outside))
            bad.append(Violation("placement outside engine set", f"table {t} on {names}"))
        w = bp.placement.writer.get(t)
        if w is None:
            bad.append(Violation("writer missing", f"table {t} has no writer engine"))
        elif w not in holders:
            bad.append(Violation("writer not in placement", f"writer {w} does not hold {t}"))

    # Some active engine must hold every table so any join stays routable.
    active = bp.active_engines()
    if tables and not any(
        all(e in bp.placement.engines_for(t) for t in tables) for e in active
    ):
        bad.append(Violation("no co-located engine", "no active engine holds all tables"))

    return ValidationReport(tuple(bad))


def classify_change(engine: EngineId, old: Provisioning, new: Provisioning) -> Optional[ChangeKind]:
    """Map a provisioning delta onto its transition kind (None when unchanged)."""
    if (old.instance_type, old.node_count) == (new.instance_type, new.node_count):
        return None
    if engine is EngineId.SCAN_SERVICE:
        return None
    if old.node_count > 0 and new.node_count == 0:
        return ChangeKind.PAUSE
    if old.node_count == 0 and new.node_count > 0:
        return ChangeKind.UNPAUSE
    if engine is EngineId.ROW_STORE:
        if new.instance_type == old.instance_type and new.node_count < old.node_count:
            return ChangeKind.REPLICA_REMOVE
        return ChangeKind.INSTANCE_CHANGE
    # Warehouse: node-count-only changes are elastic, type changes are classic.
    if new.instance_type == old.instance_type:
        return ChangeKind.ELASTIC_RESIZE
    return ChangeKind.CLASSIC_RESIZE


def diff_blueprints(
    current: Blueprint, candidate: Blueprint, catalog: "DatasetCatalog"
) -> TransitionPlan:
    """Table copies to create plus provisioning changes to reach the candidate.

    Moves cover only (table, engine) pairs present in the candidate placement
    but not the current one; shrinking placements need no data motion.
    """
    moves: list[TableMove] = []
    for t in sorted(candidate.placement.placement):
        have = current.placement.engines_for(t)
        want = candidate.placement.engines_for(t)
        src = current.placement.writer.get(t, candidate.placement.writer.get(t))
        for e in sorted(want - have, key=lambda x: x.value):
            moves.append(TableMove(t, src, e, float(catalog.tables[t].size_bytes)))

    changes: list[ProvisioningChange] = []
    for e in ENGINES:
        old = current.provisionings.get(e)
        new = candidate.provisionings.get(e)
        if old is None or new is None:
            continue
        kind = classify_change(e, old, new)
        if kind is not None:
            changes.append(ProvisioningChange(e, old, new, kind))

    return TransitionPlan(tuple(moves), tuple(changes))


def eligible_engines(
    q: "LogicalQuery", bp: Blueprint, caps: Optional[CapabilityConfig] = None
) -> frozenset:
    """Active engines that hold every referenced table and support every capability."""
    out = set()
    for e in bp.engines:
        if not bp.provisionings[e].is_active:
            continue
        if all(e in bp.placement.engines_for(t) for t in q.tables):
            out.add(e)
    if caps:
        for token in q.capability_tokens:
            supported = caps.get(token)
            if supported is not None:
                out &= set(supported)
    if not out:
        raise EmptyEligibleSet(f"query {q.query_id} has no eligible engine")
    return frozenset(out)


def universal_engine(provisionings: Mapping[EngineId, Provisioning]) -> EngineId:
    """The designated engine that holds a copy of every table."""
    rs = provisionings.get(EngineId.ROW_STORE)
    if rs is not None and rs.is_active:
        return EngineId.ROW_STORE
    return EngineId.SCAN_SERVICE


def derive_placement(
    queries: Iterable["LogicalQuery"],
    assignments: Mapping[str, EngineId],
    all_tables: Iterable[str],
    writer: Mapping[str, EngineId],
    universal: EngineId,
) -> TablePlacement:
    """Placement follows routing: each assigned engine gets copies of the tables
    its queries touch, plus the writer copy, plus the universal engine's full copy.
    """
    placement: dict[str, set] = {t: {writer[t], universal} for t in all_tables}
    for q in queries:
        e = assignments.get(q.query_id)
        if e is None:
            continue
        for t in q.tables:
            placement[t].add(e)
    return TablePlacement(
        placement={t: frozenset(es) for t, es in placement.items()},
        writer=dict(writer),
    )


def load_capability_config(doc: Mapping[str, Iterable[str]]) -> dict[str, frozenset]:
    return {token: frozenset(EngineId(e) for e in engines) for token, engines in doc.items()}
