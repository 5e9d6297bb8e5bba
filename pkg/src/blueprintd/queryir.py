"""Query IR: restricted SQL parsing, dataset statistics, featurization, selectivity.

The supported subset is SELECT projections/aggregates, FROM with one or more
tables, an optional WHERE of AND-connected filter/equijoin conjuncts, and an
optional GROUP BY. Everything here is pure and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ParseError, UnknownTable
from .blueprint import DEFAULT_CAPABILITY_KEYWORDS

DEFAULT_SELECTIVITY = 0.1   # classic fallback when a histogram is missing
HISTOGRAM_BUCKETS = 64

AGG_FUNCS = ("count", "sum", "avg", "min", "max")
COMPARISON_OPS = ("=", "!=", "<>", "<", "<=", ">", ">=", "<=>")

Literal = Union[float, str]


def stable_hash(value: str) -> int:
    """Process-independent 64-bit hash (python's hash() is salted per run)."""
    digest = hashlib.sha256(str(value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# Logical query IR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRef:
    table: str
    column: str

    def render(self) -> str:
        return f"{self.table}.{self.column}"


@dataclass(frozen=True)
class FilterPredicate:
    column: ColumnRef
    op: str
    literal: Literal


@dataclass(frozen=True)
class JoinPredicate:
    left: ColumnRef
    right: ColumnRef


@dataclass(frozen=True)
class Aggregate:
    func: str
    column: Optional[ColumnRef]  # None for COUNT(*)


@dataclass(frozen=True)
class LogicalQuery:
    query_id: str
    tables: tuple[str, ...]
    select_columns: tuple[ColumnRef, ...]
    select_star: bool
    aggregates: tuple[Aggregate, ...]
    filter_predicates: tuple[FilterPredicate, ...]
    join_predicates: tuple[JoinPredicate, ...]
    group_by: tuple[ColumnRef, ...]
    capability_tokens: tuple[str, ...] = ()
    arrival_rate: float = 0.0  # executions per hour
    class_tag: str = ""

    @property
    def columns(self) -> dict[str, tuple[str, ...]]:
        """Referenced columns per table, from every clause."""
        cols: dict[str, set] = {t: set() for t in self.tables}
        for ref in self.referenced_columns():
            cols[ref.table].add(ref.column)
        return {t: tuple(sorted(cs)) for t, cs in cols.items()}

    def referenced_columns(self) -> tuple[ColumnRef, ...]:
        seen: list[ColumnRef] = []
        for ref in self.select_columns:
            seen.append(ref)
        for agg in self.aggregates:
            if agg.column is not None:
                seen.append(agg.column)
        for p in self.filter_predicates:
            seen.append(p.column)
        for j in self.join_predicates:
            seen.append(j.left)
            seen.append(j.right)
        seen.extend(self.group_by)
        out: list[ColumnRef] = []
        for ref in seen:
            if ref not in out:
                out.append(ref)
        return tuple(out)

    @property
    def join_count(self) -> int:
        return len(self.join_predicates)


def with_rate(q: LogicalQuery, arrival_rate: float) -> LogicalQuery:
    return replace(q, arrival_rate=arrival_rate)


# ---------------------------------------------------------------------------
# Tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'[^']*')
  | (?P<op><=>|<=|>=|<>|!=|=|<|>|\(|\)|,|\.|\*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.peek().pos)

    def expect_keyword(self, word: str) -> None:
        tok = self.next()
        if tok.kind != "ident" or tok.text.lower() != word:
            raise ParseError(f"expected {word.upper()}", tok.pos)

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            raise ParseError(f"expected {text or kind}", tok.pos)
        return tok


@dataclass
class _RawColumn:
    table: Optional[str]
    column: str
    pos: int


def _parse_column(p: _Parser) -> _RawColumn:
    tok = p.expect("ident")
    if p.peek().kind == "op" and p.peek().text == ".":
        p.next()
        col = p.expect("ident")
        return _RawColumn(tok.text, col.text, tok.pos)
    return _RawColumn(None, tok.text, tok.pos)


def _parse_literal(p: _Parser) -> Literal:
    tok = p.next()
    if tok.kind == "number":
        return float(tok.text)
    if tok.kind == "string":
        return tok.text[1:-1]
    raise ParseError("expected literal", tok.pos)


def scan_capability_tokens(text: str, keywords: Sequence[str]) -> tuple[str, ...]:
    """Keyword scan over the raw SQL text; word-like keywords match on boundaries."""
    found = []
    for kw in keywords:
        if re.fullmatch(r"\w+", kw):
            if re.search(rf"\b{re.escape(kw)}\b", text, re.IGNORECASE):
                found.append(kw)
        elif kw in text:
            found.append(kw)
    return tuple(found)


def parse_query(
    text: str, capability_keywords: Sequence[str] = DEFAULT_CAPABILITY_KEYWORDS
) -> LogicalQuery:
    """Parse a supported-subset SQL string into the logical IR.

    Raises ParseError (with position) on anything outside the subset.
    """
    p = _Parser(_tokenize(text))
    p.expect_keyword("select")

    select_star = False
    raw_select: list[_RawColumn] = []
    raw_aggs: list[tuple[str, Optional[_RawColumn]]] = []
    while True:
        tok = p.peek()
        if tok.kind == "op" and tok.text == "*":
            p.next()
            select_star = True
        elif tok.kind == "ident" and tok.text.lower() in AGG_FUNCS and \
                p.tokens[p.i + 1].kind == "op" and p.tokens[p.i + 1].text == "(":
            func = p.next().text.lower()
            p.expect("op", "(")
            if p.peek().kind == "op" and p.peek().text == "*":
                p.next()
                if func != "count":
                    raise ParseError("only COUNT may aggregate *", tok.pos)
                raw_aggs.append((func, None))
            else:
                raw_aggs.append((func, _parse_column(p)))
            p.expect("op", ")")
        elif tok.kind == "ident":
            raw_select.append(_parse_column(p))
        else:
            raise ParseError("expected select item", tok.pos)
        if p.peek().kind == "op" and p.peek().text == ",":
            p.next()
            continue
        break

    p.expect_keyword("from")
    tables: list[str] = [p.expect("ident").text]
    while p.peek().kind == "op" and p.peek().text == ",":
        p.next()
        tables.append(p.expect("ident").text)
    if len(set(tables)) != len(tables):
        raise ParseError("duplicate table in FROM", p.peek().pos)

    raw_filters: list[tuple[_RawColumn, str, Literal]] = []
    raw_joins: list[tuple[_RawColumn, _RawColumn]] = []
    if p.at_keyword("where"):
        p.next()
        while True:
            left = _parse_column(p)
            op_tok = p.next()
            if op_tok.kind != "op" or op_tok.text not in COMPARISON_OPS:
                raise ParseError("expected comparison operator", op_tok.pos)
            nxt = p.peek()
            if op_tok.text == "=" and nxt.kind == "ident":
                right = _parse_column(p)
                raw_joins.append((left, right))
            else:
                raw_filters.append((left, op_tok.text, _parse_literal(p)))
            if p.at_keyword("and"):
                p.next()
                continue
            break

    raw_group: list[_RawColumn] = []
    if p.at_keyword("group"):
        p.next()
        p.expect_keyword("by")
        raw_group.append(_parse_column(p))
        while p.peek().kind == "op" and p.peek().text == ",":
            p.next()
            raw_group.append(_parse_column(p))

    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"unsupported trailing syntax {tok.text!r}", tok.pos)

    table_set = set(tables)

    def resolve(raw: _RawColumn) -> ColumnRef:
        if raw.table is not None:
            if raw.table not in table_set:
                raise ParseError(f"column qualifier {raw.table!r} not in FROM", raw.pos)
            return ColumnRef(raw.table, raw.column)
        if len(tables) == 1:
            return ColumnRef(tables[0], raw.column)
        raise ParseError(f"ambiguous unqualified column {raw.column!r}", raw.pos)

    joins = []
    for lraw, rraw in raw_joins:
        left, right = resolve(lraw), resolve(rraw)
        if left.table == right.table:
            raise ParseError("join predicate must reference two distinct tables", lraw.pos)
        joins.append(JoinPredicate(left, right))

    q = LogicalQuery(
        query_id="",
        tables=tuple(tables),
        select_columns=tuple(resolve(r) for r in raw_select),
        select_star=select_star,
        aggregates=tuple(Aggregate(f, resolve(r) if r is not None else None) for f, r in raw_aggs),
        filter_predicates=tuple(
            FilterPredicate(resolve(r), "!=" if op == "<>" else op, lit)
            for r, op, lit in raw_filters
        ),
        join_predicates=tuple(joins),
        group_by=tuple(resolve(r) for r in raw_group),
        capability_tokens=scan_capability_tokens(text, capability_keywords),
    )
    return replace(q, query_id=query_content_id(q))


def _render_literal(lit: Literal) -> str:
    if isinstance(lit, str):
        return f"'{lit}'"
    if float(lit).is_integer():
        return str(int(lit))
    return repr(float(lit))


def render_query(q: LogicalQuery) -> str:
    """Canonical SQL for the IR; parse(render(parse(t))) is structurally stable."""
    items: list[str] = []
    if q.select_star:
        items.append("*")
    items.extend(ref.render() for ref in q.select_columns)
    items.extend(
        f"{a.func.upper()}({a.column.render() if a.column else '*'})" for a in q.aggregates
    )
    if not items:
        items.append("*")
    sql = f"SELECT {', '.join(items)} FROM {', '.join(q.tables)}"
    conjuncts = [f"{j.left.render()} = {j.right.render()}" for j in q.join_predicates]
    conjuncts.extend(
        f"{f.column.render()} {f.op} {_render_literal(f.literal)}" for f in q.filter_predicates
    )
    if conjuncts:
        sql += " WHERE " + " AND ".join(conjuncts)
    if q.group_by:
        sql += " GROUP BY " + ", ".join(ref.render() for ref in q.group_by)
    return sql


def query_content_id(q: LogicalQuery) -> str:
    """Content hash of the normalized query text."""
    return hashlib.sha256(render_query(q).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Histograms and the dataset catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    kind: str                  # "numeric" (equi-width) or "hash" (strings)
    counts: tuple[float, ...]
    distinct: int
    row_count: int
    boundaries: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == "numeric":
            b = self.boundaries
            if b is None or len(b) != len(self.counts) + 1:
                raise ValueError("numeric histogram needs len(counts)+1 boundaries")
            if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
                raise ValueError("boundaries must be strictly increasing")
        if round(sum(self.counts)) != self.row_count:
            raise ValueError("histogram counts must sum to the table row count")

    @classmethod
    def from_values(cls, values: Sequence[float], buckets: int = HISTOGRAM_BUCKETS) -> "Histogram":
        arr = np.asarray(values, dtype=float)
        lo, hi = float(arr.min()), float(arr.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, buckets + 1)
        counts, _ = np.histogram(arr, bins=edges)
        return cls(
            kind="numeric",
            counts=tuple(float(c) for c in counts),
            distinct=int(np.unique(arr).size),
            row_count=int(arr.size),
            boundaries=tuple(float(b) for b in edges),
        )

    @classmethod
    def from_strings(cls, values: Sequence[str], buckets: int = HISTOGRAM_BUCKETS) -> "Histogram":
        counts = [0.0] * buckets
        for v in values:
            counts[stable_hash(v) % buckets] += 1.0
        return cls(
            kind="hash",
            counts=tuple(counts),
            distinct=len(set(values)),
            row_count=len(values),
        )

    def fraction_below(self, value: float) -> float:
        """P(x < value) under the equi-width bucket interpolation."""
        if self.kind != "numeric":
            return DEFAULT_SELECTIVITY
        b = self.boundaries
        if value <= b[0]:
            return 0.0
        if value >= b[-1]:
            return 1.0
        total = float(self.row_count)
        acc = 0.0
        for i in range(len(self.counts)):
            lo, hi = b[i], b[i + 1]
            if value >= hi:
                acc += self.counts[i]
            else:
                acc += self.counts[i] * (value - lo) / (hi - lo)
                break
        return min(1.0, max(0.0, acc / total)) if total > 0 else 0.0

    def equality_fraction(self, literal: Literal) -> float:
        if self.kind == "hash" and isinstance(literal, str):
            if self.row_count <= 0:
                return DEFAULT_SELECTIVITY
            idx = stable_hash(literal) % len(self.counts)
            return self.counts[idx] / self.row_count
        if self.kind == "numeric" and not isinstance(literal, str):
            return 1.0 / self.distinct if self.distinct > 0 else DEFAULT_SELECTIVITY
        return DEFAULT_SELECTIVITY

    def to_json_dict(self) -> dict:
        doc = {"kind": self.kind, "counts": list(self.counts), "distinct": self.distinct}
        if self.boundaries is not None:
            doc["boundaries"] = list(self.boundaries)
        return doc

    @classmethod
    def from_json_dict(cls, doc: Mapping, row_count: int) -> "Histogram":
        return cls(
            kind=doc["kind"],
            counts=tuple(float(c) for c in doc["counts"]),
            distinct=int(doc["distinct"]),
            row_count=row_count,
            boundaries=tuple(float(b) for b in doc["boundaries"]) if "boundaries" in doc else None,
        )


@dataclass(frozen=True)
class TableStats:
    row_count: int
    size_bytes: float
    columns: Mapping[str, Histogram]

    def __post_init__(self):
        if self.row_count <= 0 or self.size_bytes <= 0:
            raise ValueError("table row count and size must be positive")


@dataclass(frozen=True)
class DatasetCatalog:
    tables: Mapping[str, TableStats]

    def table(self, name: str) -> TableStats:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTable(name) from None

    def histogram(self, ref: ColumnRef) -> Optional[Histogram]:
        return self.table(ref.table).columns.get(ref.column)

    def total_size_bytes(self) -> float:
        return float(sum(t.size_bytes for t in self.tables.values()))

    def to_json_dict(self) -> dict:
        return {
            "tables": {
                name: {
                    "row_count": t.row_count,
                    "size_bytes": t.size_bytes,
                    "columns": {c: h.to_json_dict() for c, h in sorted(t.columns.items())},
                }
                for name, t in sorted(self.tables.items())
            }
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "DatasetCatalog":
        tables = {}
        for name, td in doc["tables"].items():
            row_count = int(td["row_count"])
            tables[name] = TableStats(
                row_count=row_count,
                size_bytes=float(td["size_bytes"]),
                columns={
                    c: Histogram.from_json_dict(h, row_count)
                    for c, h in td.get("columns", {}).items()
                },
            )
        return cls(tables=tables)


def load_catalog(path) -> DatasetCatalog:
    with open(path, "r", encoding="utf-8") as f:
        return DatasetCatalog.from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# Selectivity estimation (Selinger-style over histograms)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectivityEstimate:
    filters: tuple[float, ...]          # aligned with q.filter_predicates
    joins: tuple[float, ...]            # aligned with q.join_predicates
    scan_by_table: Mapping[str, float]  # product of filter conjuncts per table
    combined: float                     # independence product of everything

    def scan_cardinality(self, catalog: DatasetCatalog, table: str) -> float:
        return catalog.table(table).row_count * self.scan_by_table[table]


def _filter_selectivity(pred: FilterPredicate, hist: Optional[Histogram]) -> float:
    if hist is None:
        return DEFAULT_SELECTIVITY
    op, lit = pred.op, pred.literal
    if op in ("<", "<="):
        sel = hist.fraction_below(float(lit)) if not isinstance(lit, str) else DEFAULT_SELECTIVITY
    elif op in (">", ">="):
        sel = 1.0 - hist.fraction_below(float(lit)) if not isinstance(lit, str) else DEFAULT_SELECTIVITY
    elif op == "=":
        sel = hist.equality_fraction(lit)
    elif op == "!=":
        sel = 1.0 - hist.equality_fraction(lit)
    else:  # specialized operators such as <=> carry no histogram semantics
        sel = DEFAULT_SELECTIVITY
    return min(1.0, max(0.0, sel))


def _join_selectivity(join: JoinPredicate, catalog: DatasetCatalog) -> float:
    hl = catalog.histogram(join.left)
    hr = catalog.histogram(join.right)
    if hl is None or hr is None:
        return DEFAULT_SELECTIVITY
    d = max(hl.distinct, hr.distinct)
    sel = 1.0 / d if d > 0 else DEFAULT_SELECTIVITY
    return min(1.0, max(0.0, sel))


def estimate_selectivity(q: LogicalQuery, catalog: DatasetCatalog) -> SelectivityEstimate:
    """Histogram interpolation for filters, 1/max(distinct) for equijoins,
    independence products for conjunctions. Missing histograms fall back to
    the fixed default selectivity.
    """
    for t in q.tables:
        catalog.table(t)
    filters = tuple(_filter_selectivity(p, catalog.histogram(p.column)) for p in q.filter_predicates)
    joins = tuple(_join_selectivity(j, catalog) for j in q.join_predicates)
    scan: dict[str, float] = {t: 1.0 for t in q.tables}
    for p, sel in zip(q.filter_predicates, filters):
        scan[p.column.table] = min(1.0, max(0.0, scan[p.column.table] * sel))
    combined = 1.0
    for sel in filters + joins:
        combined *= sel
    combined = min(1.0, max(0.0, combined))
    return SelectivityEstimate(filters=filters, joins=joins, scan_by_table=scan, combined=combined)


# ---------------------------------------------------------------------------
# Feature graph (five node types, child -> parent edges into the embedding)
# ---------------------------------------------------------------------------

class NodeKind(str, Enum):
    TABLE = "table"
    COLUMN = "column"
    PREDICATE = "predicate"
    OPERATION = "operation"
    EMBEDDING = "embedding"


MISSING_FEATURE = -1.0

_OP_CODES = {"=": 0.0, "!=": 1.0, "<": 2.0, "<=": 3.0, ">": 4.0, ">=": 5.0, "<=>": 6.0}
_OPKIND_SCAN, _OPKIND_JOIN, _OPKIND_AGG = 0.0, 1.0, 2.0


@dataclass(frozen=True)
class FGNode:
    node_id: int
    kind: NodeKind
    name: str
    features: tuple[float, ...]


@dataclass(frozen=True)
class FeatureGraph:
    nodes: tuple[FGNode, ...]
    edges: tuple[tuple[int, int], ...]  # (child, parent)

    def nodes_of_kind(self, kind: NodeKind) -> tuple[FGNode, ...]:
        return tuple(n for n in self.nodes if n.kind is kind)

    @property
    def embedding_id(self) -> int:
        (node,) = self.nodes_of_kind(NodeKind.EMBEDDING)
        return node.node_id

    def parents(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        for child, parent in self.edges:
            out[child].append(parent)
        return out

    def is_dag(self) -> bool:
        adj = self.parents()
        state: dict[int, int] = {}

        def visit(u: int) -> bool:
            state[u] = 1
            for v in adj[u]:
                s = state.get(v, 0)
                if s == 1 or (s == 0 and not visit(v)):
                    return False
            state[u] = 2
            return True

        return all(state.get(n.node_id, 0) == 2 or visit(n.node_id) for n in self.nodes)

    def all_reach_embedding(self) -> bool:
        adj = self.parents()
        target = self.embedding_id
        memo: dict[int, bool] = {target: True}

        def reach(u: int) -> bool:
            if u in memo:
                return memo[u]
            memo[u] = False  # cycle guard
            memo[u] = any(reach(v) for v in adj[u])
            return memo[u]

        return all(reach(n.node_id) for n in self.nodes)


def _log10p(x: float) -> float:
    return math.log10(1.0 + max(0.0, x))


def build_feature_graph(q: LogicalQuery, catalog: DatasetCatalog) -> FeatureGraph:
    """Five-node-type featurization: table and column nodes, one predicate node
    per conjunct, scan/join/aggregate operation nodes, one embedding node.
    Unavailable feature slots hold -1.
    """
    for t in q.tables:
        catalog.table(t)
    sels = estimate_selectivity(q, catalog)

    nodes: list[FGNode] = []
    edges: list[tuple[int, int]] = []

    def add(kind: NodeKind, name: str, features: Sequence[float]) -> int:
        nid = len(nodes)
        nodes.append(FGNode(nid, kind, name, tuple(float(f) for f in features)))
        return nid

    cols_by_table = q.columns
    table_ids: dict[str, int] = {}
    for t in q.tables:
        ts = catalog.table(t)
        table_ids[t] = add(
            NodeKind.TABLE, t,
            [_log10p(ts.row_count), _log10p(ts.size_bytes), len(cols_by_table[t])],
        )

    column_ids: dict[ColumnRef, int] = {}
    for t in q.tables:
        for c in cols_by_table[t]:
            ref = ColumnRef(t, c)
            hist = catalog.histogram(ref)
            feats = [
                _log10p(hist.distinct) if hist is not None else MISSING_FEATURE,
                _log10p(catalog.table(t).row_count),
                (1.0 if hist.kind == "numeric" else 0.0) if hist is not None else MISSING_FEATURE,
            ]
            column_ids[ref] = add(NodeKind.COLUMN, ref.render(), feats)
            edges.append((table_ids[t], column_ids[ref]))

    filter_ids: list[int] = []
    for p, sel in zip(q.filter_predicates, sels.filters):
        hist = catalog.histogram(p.column)
        lit_norm = MISSING_FEATURE
        if hist is not None and hist.kind == "numeric" and not isinstance(p.literal, str):
            lo, hi = hist.boundaries[0], hist.boundaries[-1]
            if hi > lo:
                lit_norm = min(1.0, max(0.0, (float(p.literal) - lo) / (hi - lo)))
        sel_feat = sel if hist is not None else MISSING_FEATURE
        nid = add(
            NodeKind.PREDICATE,
            f"{p.column.render()} {p.op}",
            [0.0, _OP_CODES[p.op], sel_feat, lit_norm],
        )
        filter_ids.append(nid)
        edges.append((column_ids[p.column], nid))

    join_pred_ids: list[int] = []
    for j, sel in zip(q.join_predicates, sels.joins):
        nid = add(
            NodeKind.PREDICATE,
            f"{j.left.render()} = {j.right.render()}",
            [1.0, _OP_CODES["="], sel, MISSING_FEATURE],
        )
        join_pred_ids.append(nid)
        edges.append((column_ids[j.left], nid))
        edges.append((column_ids[j.right], nid))

    op_ids: list[int] = []
    scan_ids: dict[str, int] = {}
    for t in q.tables:
        sel = sels.scan_by_table[t]
        est_rows = catalog.table(t).row_count * sel
        nid = add(NodeKind.OPERATION, f"scan {t}", [_OPKIND_SCAN, sel, _log10p(est_rows)])
        scan_ids[t] = nid
        op_ids.append(nid)
        for i, p in enumerate(q.filter_predicates):
            if p.column.table == t:
                edges.append((filter_ids[i], nid))
        if cols_by_table[t]:
            for c in cols_by_table[t]:
                edges.append((column_ids[ColumnRef(t, c)], nid))
        else:
            edges.append((table_ids[t], nid))

    for i, j in enumerate(q.join_predicates):
        jsel = sels.joins[i]
        lrows = sels.scan_cardinality(catalog, j.left.table)
        rrows = sels.scan_cardinality(catalog, j.right.table)
        nid = add(
            NodeKind.OPERATION,
            f"join {j.left.table}-{j.right.table}",
            [_OPKIND_JOIN, jsel, _log10p(lrows * rrows * jsel)],
        )
        op_ids.append(nid)
        edges.append((join_pred_ids[i], nid))
        edges.append((scan_ids[j.left.table], nid))
        edges.append((scan_ids[j.right.table], nid))

    if q.aggregates or q.group_by:
        nid = add(NodeKind.OPERATION, "aggregate", [_OPKIND_AGG, MISSING_FEATURE, MISSING_FEATURE])
        op_ids.append(nid)
        agg_cols: list[ColumnRef] = [a.column for a in q.aggregates if a.column is not None]
        agg_cols.extend(q.group_by)
        for ref in dict.fromkeys(agg_cols):
            edges.append((column_ids[ref], nid))

    emb = add(
        NodeKind.EMBEDDING, "embedding",
        [len(q.tables), len(q.filter_predicates) + len(q.join_predicates), len(op_ids)],
    )
    for nid in op_ids:
        edges.append((nid, emb))

    return FeatureGraph(tuple(nodes), tuple(edges))


# ---------------------------------------------------------------------------
# Workload window
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorkloadWindow:
    """Representative unique queries with arrival rates, plus dataset stats."""

    queries: tuple[LogicalQuery, ...]
    txn_rate_per_s: float
    catalog: DatasetCatalog
    window_hours: float = 1.0

    def rates(self) -> np.ndarray:
        return np.array([q.arrival_rate for q in self.queries], dtype=float)

    def ids(self) -> tuple[str, ...]:
        return tuple(q.query_id for q in self.queries)


def load_workload_records(
    path, capability_keywords: Sequence[str] = DEFAULT_CAPABILITY_KEYWORDS
) -> tuple[LogicalQuery, ...]:
    """Read a JSON Lines workload file: {query_id, sql, arrival_rate_per_hour}.

    Records whose canonical rendering matches are merged (rates summed) so a
    recurring query keeps a single assignment entry.
    """
    merged: dict[str, LogicalQuery] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            q = parse_query(rec["sql"], capability_keywords)
            key = render_query(q)
            rate = float(rec.get("arrival_rate_per_hour", 0.0))
            if key in merged:
                prev = merged[key]
                merged[key] = replace(prev, arrival_rate=prev.arrival_rate + rate)
                continue
            qid = str(rec["query_id"]) if "query_id" in rec else q.query_id
            merged[key] = replace(
                q, query_id=qid, arrival_rate=rate, class_tag=str(rec.get("class", ""))
            )
    return tuple(merged.values())
