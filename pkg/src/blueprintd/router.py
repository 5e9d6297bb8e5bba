"""Online query routing: pre-planned assignment lookup, eligibility filtering,
and a small CART decision forest that ranks engines by predicted speed.

The forest is trained during planning from the run-time model's predictions
(classification is cheap at query time; the run-time model is not).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .blueprint import ENGINES, Blueprint, CapabilityConfig, EngineId, eligible_engines
from .errors import EmptyWorkload
from .queryir import DatasetCatalog, LogicalQuery, WorkloadWindow, estimate_selectivity
from .stats import geometric_mean

FEATURE_NAMES = (
    "log_total_cardinality",
    "log_max_cardinality",
    "log_min_cardinality",
    "table_count",
    "join_count",
)


@dataclass(frozen=True)
class RouterConfig:
    n_trees: int = 25
    max_depth: int = 6
    bootstrap_fraction: float = 1.0
    seed: int = 0
    min_samples_leaf: int = 1


def routing_features(q: LogicalQuery, catalog: DatasetCatalog) -> np.ndarray:
    """Estimated per-table scan cardinalities folded to a fixed-width vector."""
    sels = estimate_selectivity(q, catalog)
    cards = [max(0.0, sels.scan_cardinality(catalog, t)) for t in q.tables]
    total = sum(cards)
    return np.array(
        [
            math.log10(1.0 + total),
            math.log10(1.0 + max(cards)),
            math.log10(1.0 + min(cards)),
            float(len(q.tables)),
            float(q.join_count),
        ],
        dtype=float,
    )


@dataclass(frozen=True)
class TreeNode:
    """Internal node: feature/threshold/children. Leaf: engine ranking."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    ranking: Optional[tuple[EngineId, ...]] = None

    @property
    def is_leaf(self) -> bool:
        return self.ranking is not None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_json_dict(self) -> dict:
        if self.is_leaf:
            return {"ranking": [e.value for e in self.ranking]}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json_dict(),
            "right": self.right.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "TreeNode":
        if "ranking" in doc:
            return cls(ranking=tuple(EngineId(e) for e in doc["ranking"]))
        return cls(
            feature=int(doc["feature"]),
            threshold=float(doc["threshold"]),
            left=cls.from_json_dict(doc["left"]),
            right=cls.from_json_dict(doc["right"]),
        )


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _leaf_ranking(rank_rows: np.ndarray) -> tuple[EngineId, ...]:
    """Engines ordered by mean rank position among the leaf's samples; ties in
    engine enum order."""
    mean_pos = rank_rows.mean(axis=0)
    order = sorted(range(len(ENGINES)), key=lambda e: (mean_pos[e], e))
    return tuple(ENGINES[e] for e in order)


def _build_tree(
    x: np.ndarray,
    top: np.ndarray,
    rank_rows: np.ndarray,
    depth: int,
    cfg: RouterConfig,
) -> TreeNode:
    n = x.shape[0]
    counts = np.bincount(top, minlength=len(ENGINES))
    if depth >= cfg.max_depth or n < 2 * cfg.min_samples_leaf or _gini(counts) == 0.0:
        return TreeNode(ranking=_leaf_ranking(rank_rows))

    best = None  # (impurity, feature, threshold)
    for f in range(x.shape[1]):
        values = np.unique(x[:, f])
        if values.size < 2:
            continue
        thresholds = (values[:-1] + values[1:]) / 2.0
        for thr in thresholds:
            mask = x[:, f] <= thr
            nl = int(mask.sum())
            if nl < cfg.min_samples_leaf or n - nl < cfg.min_samples_leaf:
                continue
            gl = _gini(np.bincount(top[mask], minlength=len(ENGINES)))
            gr = _gini(np.bincount(top[~mask], minlength=len(ENGINES)))
            impurity = (nl * gl + (n - nl) * gr) / n
            if best is None or impurity < best[0] - 1e-12:
                best = (impurity, f, float(thr))
    if best is None or best[0] >= _gini(counts) - 1e-12:
        return TreeNode(ranking=_leaf_ranking(rank_rows))

    _, f, thr = best
    mask = x[:, f] <= thr
    return TreeNode(
        feature=f,
        threshold=thr,
        left=_build_tree(x[mask], top[mask], rank_rows[mask], depth + 1, cfg),
        right=_build_tree(x[~mask], top[~mask], rank_rows[~mask], depth + 1, cfg),
    )


@dataclass(frozen=True)
class RoutingForest:
    trees: tuple[TreeNode, ...]
    max_depth: int

    def _leaf_for(self, tree: TreeNode, x: np.ndarray) -> tuple[TreeNode, int]:
        node = tree
        tests = 0
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
            tests += 1
        return node, tests

    def predict_ranking(self, x: np.ndarray) -> tuple[EngineId, ...]:
        ranking, _ = self.predict_ranking_counted(x)
        return ranking

    def predict_ranking_counted(self, x: np.ndarray) -> tuple[tuple[EngineId, ...], int]:
        """Borda aggregation of leaf rankings; also reports decision nodes tested."""
        borda = np.zeros(len(ENGINES))
        tested = 0
        for tree in self.trees:
            leaf, n = self._leaf_for(tree, x)
            tested += n
            for pos, engine in enumerate(leaf.ranking):
                borda[ENGINES.index(engine)] += len(ENGINES) - 1 - pos
        order = sorted(range(len(ENGINES)), key=lambda e: (-borda[e], e))
        return tuple(ENGINES[e] for e in order), tested

    def inference_node_bound(self) -> int:
        # Each lookup evaluates at most max_depth feature tests per tree.
        return len(self.trees) * self.max_depth

    def to_json_dict(self) -> dict:
        return {
            "feature_names": list(FEATURE_NAMES),
            "max_depth": self.max_depth,
            "trees": [t.to_json_dict() for t in self.trees],
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "RoutingForest":
        return cls(
            trees=tuple(TreeNode.from_json_dict(t) for t in doc["trees"]),
            max_depth=int(doc["max_depth"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path) -> "RoutingForest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def train_routing_forest(
    w: WorkloadWindow,
    predicted_runtimes: Mapping[tuple[str, EngineId], float],
    cfg: RouterConfig = RouterConfig(),
) -> RoutingForest:
    """CART forest on bootstrap samples. Labels come from the run-time model:
    the engine with the lowest predicted run time is the preferred class, and
    leaves store full engine rankings aggregated from their samples.
    """
    if not w.queries:
        raise EmptyWorkload("cannot train a routing forest on an empty workload")
    n = len(w.queries)
    x = np.stack([routing_features(q, w.catalog) for q in w.queries])
    rank_rows = np.empty((n, len(ENGINES)))
    top = np.empty(n, dtype=np.int64)
    for i, q in enumerate(w.queries):
        runtimes = [predicted_runtimes[(q.query_id, e)] for e in ENGINES]
        order = sorted(range(len(ENGINES)), key=lambda e: (runtimes[e], e))
        for pos, e in enumerate(order):
            rank_rows[i, e] = pos
        top[i] = order[0]

    rng = np.random.default_rng(cfg.seed)
    n_boot = max(1, int(round(cfg.bootstrap_fraction * n)))
    trees = []
    for _ in range(cfg.n_trees):
        idx = rng.integers(0, n, size=n_boot)
        trees.append(_build_tree(x[idx], top[idx], rank_rows[idx], 0, cfg))
    return RoutingForest(trees=tuple(trees), max_depth=cfg.max_depth)


def route(
    q: LogicalQuery,
    bp: Blueprint,
    forest: Optional[RoutingForest],
    caps: Optional[CapabilityConfig],
    catalog: DatasetCatalog,
) -> EngineId:
    """Pre-planned assignment when it is still eligible, otherwise the
    forest's highest-ranked eligible engine (enum order without a forest).
    """
    eligible = eligible_engines(q, bp, caps)
    assigned = bp.routing.assignments.get(q.query_id)
    if assigned is not None and assigned in eligible:
        return assigned
    if forest is None:
        ranking: Sequence[EngineId] = ENGINES
    else:
        ranking = forest.predict_ranking(routing_features(q, catalog))
    for engine in ranking:
        if engine in eligible:
            return engine
    # eligible_engines never returns an empty set, so this is unreachable.
    raise AssertionError("ranking produced no eligible engine")


def routing_slowdown(decisions: Sequence[tuple[EngineId, Mapping[EngineId, float]]]) -> float:
    """Geometric mean over decisions of chosen runtime / best runtime (>= 1)."""
    ratios = []
    for chosen, runtimes in decisions:
        best = min(runtimes.values())
        ratios.append(runtimes[chosen] / best)
    return geometric_mean(ratios)
