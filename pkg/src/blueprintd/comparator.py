"""Design-goal comparator: minimize cost under p90 latency SLOs.

Vector scores map to scalar dollar costs; infeasible candidates (predicted p90
beyond an SLO) get +inf. Times are held in seconds and converted to hours
inside scalarize so the result is in dollars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .scoring import VectorScore
from .stats import percentile

DEFAULT_GAMMA = 2.0


@dataclass(frozen=True)
class SloConfig:
    txn_p90_s: float
    query_p90_s: float
    gamma: float = DEFAULT_GAMMA
    benefit_period_s: float = 24 * 3600.0
    # Extra per-class ceilings: class tag -> p90 seconds. The empty tag uses
    # query_p90_s. Queries whose tag is missing here also fall back to it.
    class_slos: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.txn_p90_s, self.query_p90_s, self.gamma, self.benefit_period_s) <= 0:
            raise ValueError("SLO parameters must be positive")

    def query_slo_for(self, tag: str) -> float:
        return float(self.class_slos.get(tag, self.query_p90_s))

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "SloConfig":
        classes = {c["tag"]: float(c["query_p90_s"]) for c in doc.get("classes", [])}
        return cls(
            txn_p90_s=float(doc["txn_p90_s"]),
            query_p90_s=float(doc["query_p90_s"]),
            gamma=float(doc.get("gamma", DEFAULT_GAMMA)),
            benefit_period_s=float(doc.get("benefit_period_hours", 24.0)) * 3600.0,
            class_slos=classes,
        )

    def to_json_dict(self) -> dict:
        return {
            "txn_p90_s": self.txn_p90_s,
            "query_p90_s": self.query_p90_s,
            "gamma": self.gamma,
            "benefit_period_hours": self.benefit_period_s / 3600.0,
            "classes": [
                {"tag": t, "query_p90_s": s} for t, s in sorted(self.class_slos.items())
            ],
        }


def load_slo(path) -> SloConfig:
    with open(path, "r", encoding="utf-8") as f:
        return SloConfig.from_json_dict(json.load(f))


@dataclass(frozen=True)
class CurrentMetrics:
    """Latency and cost measured on the current blueprint."""

    txn_p90_s: float
    query_p90_s: float
    operating_cost_per_hour: float  # C0
    query_p90_by_class: Mapping[str, float] = field(default_factory=dict)


def penalty(m: CurrentMetrics, slo: SloConfig) -> float:
    """Multiplier >= 1 that grows as the current blueprint nears its SLOs."""
    ratio = max(m.txn_p90_s / slo.txn_p90_s, m.query_p90_s / slo.query_p90_s)
    for tag, value in m.query_p90_by_class.items():
        ratio = max(ratio, value / slo.query_slo_for(tag))
    return 1.0 + ratio


def predicted_query_p90s(s: VectorScore) -> dict[str, float]:
    """Arrival-weighted nearest-rank p90 per SLO class (empty tag = default)."""
    out: dict[str, float] = {}
    tags = sorted(set(s.class_tags)) if s.class_tags else []
    for tag in tags or [""]:
        mask = np.array([t == tag for t in s.class_tags], dtype=bool)
        if not mask.any():
            continue
        values = s.query_latencies[mask]
        weights = s.arrival_weights[mask]
        if np.any(np.isinf(values)):
            out[tag] = math.inf
        elif float(weights.sum()) <= 0.0:
            out[tag] = 0.0
        else:
            out[tag] = percentile(values, 0.9, weights)
    return out


def scalarize(s: VectorScore, m: CurrentMetrics, slo: SloConfig) -> float:
    """W = P^gamma * C0 * T_T + C_T + C * T_B (times converted to hours),
    or +inf when a predicted p90 violates its SLO.
    """
    if s.query_ids:
        for tag, p90 in predicted_query_p90s(s).items():
            if p90 > slo.query_slo_for(tag):
                return math.inf
    if s.txn_latency > slo.txn_p90_s:
        return math.inf
    p = penalty(m, slo)
    return (
        p**slo.gamma * m.operating_cost_per_hour * (s.transition_time_s / 3600.0)
        + s.transition_cost
        + s.operating_cost * (slo.benefit_period_s / 3600.0)
    )


def _order_key(s: VectorScore, m: CurrentMetrics, slo: SloConfig):
    return (
        scalarize(s, m, slo),
        s.transition_time_s,
        s.operating_cost,
        s.blueprint_digest or "",
    )


def compare(s1: VectorScore, s2: VectorScore, m: CurrentMetrics, slo: SloConfig) -> int:
    """Total order: scalarized W, then lower T_T, lower C, then blueprint hash.

    Returns -1 when s1 ranks better (lower), 0 on a full tie, +1 otherwise.
    """
    k1, k2 = _order_key(s1, m, slo), _order_key(s2, m, slo)
    if k1 < k2:
        return -1
    if k1 > k2:
        return 1
    return 0
