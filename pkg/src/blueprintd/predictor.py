"""Run-time and bytes-scanned prediction, model-constant fitting, Q-error.

Predictors share one interface; the oracle family reads simulator ground truth
(the stand-in for a trained run-time model), while the table predictor replays
measured calibration data with a nearest-neighbor fallback in feature space.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .blueprint import EngineId
from .errors import DegenerateDesign, NoCalibration, NonPositiveInput
from .queryir import DatasetCatalog, LogicalQuery, estimate_selectivity


class GroundTruth(Protocol):
    def base_runtime(self, query_id: str, engine: EngineId) -> float: ...
    def bytes_scanned(self, query_id: str) -> float: ...


class Predictor(Protocol):
    def predict_runtime(self, q: LogicalQuery, engine: EngineId) -> float: ...
    def predict_bytes_scanned(self, q: LogicalQuery) -> float: ...


@dataclass(frozen=True)
class MappingGroundTruth:
    """Dict-backed ground truth, mostly for tests and calibration tables."""

    runtimes: Mapping[tuple[str, EngineId], float]
    scan_bytes: Mapping[str, float]

    def base_runtime(self, query_id: str, engine: EngineId) -> float:
        return self.runtimes[(query_id, engine)]

    def bytes_scanned(self, query_id: str) -> float:
        return self.scan_bytes[query_id]


@dataclass(frozen=True)
class OraclePredictor:
    """Returns ground truth exactly (Q error identically 1)."""

    truth: GroundTruth

    def predict_runtime(self, q: LogicalQuery, engine: EngineId) -> float:
        return float(self.truth.base_runtime(q.query_id, engine))

    def predict_bytes_scanned(self, q: LogicalQuery) -> float:
        return float(self.truth.bytes_scanned(q.query_id))


def _selected(seed: int, key: str, fraction: float) -> bool:
    """Order-independent membership draw for the perturbed subset."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0**64
    return u < fraction


@dataclass(frozen=True)
class NoisyOraclePredictor:
    """Ground truth with a multiplicative error applied to a seeded subset of
    the predictions. fraction in [0, 1], error > -1.
    """

    truth: GroundTruth
    fraction: float
    error: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        if self.error <= -1.0:
            raise ValueError("error must exceed -1")

    def predict_runtime(self, q: LogicalQuery, engine: EngineId) -> float:
        g = float(self.truth.base_runtime(q.query_id, engine))
        if _selected(self.seed, f"rt:{q.query_id}:{engine.value}", self.fraction):
            return g * (1.0 + self.error)
        return g

    def predict_bytes_scanned(self, q: LogicalQuery) -> float:
        b = float(self.truth.bytes_scanned(q.query_id))
        if _selected(self.seed, f"bytes:{q.query_id}", self.fraction):
            return b * (1.0 + self.error)
        return b


def calibration_features(q: LogicalQuery, catalog: DatasetCatalog) -> np.ndarray:
    """Aggregated graph features used for nearest-neighbor fallback."""
    sels = estimate_selectivity(q, catalog)
    log_rows = sum(math.log10(1 + catalog.table(t).row_count) for t in q.tables)
    return np.array(
        [float(len(q.tables)), float(q.join_count), log_rows, sels.combined], dtype=float
    )


class TablePredictor:
    """Calibration map (query, engine) -> measured values, with L2
    nearest-neighbor fallback over aggregated feature vectors for unseen queries.
    """

    def __init__(
        self,
        runtimes: Mapping[tuple[str, EngineId], float],
        scan_bytes: Mapping[str, float],
        features: Mapping[str, np.ndarray],
        catalog: DatasetCatalog,
    ):
        if not runtimes:
            raise NoCalibration("empty calibration set")
        self._runtimes = dict(runtimes)
        self._bytes = dict(scan_bytes)
        self._features = {k: np.asarray(v, dtype=float) for k, v in features.items()}
        self._catalog = catalog

    def _nearest(self, q: LogicalQuery, require_engine: Optional[EngineId]) -> str:
        target = calibration_features(q, self._catalog)
        best_id, best_d = None, math.inf
        for qid in sorted(self._features):
            if require_engine is not None and (qid, require_engine) not in self._runtimes:
                continue
            d = float(np.linalg.norm(self._features[qid] - target))
            if d < best_d:
                best_id, best_d = qid, d
        if best_id is None:
            raise NoCalibration("no calibration entry for the requested engine")
        return best_id

    def predict_runtime(self, q: LogicalQuery, engine: EngineId) -> float:
        hit = self._runtimes.get((q.query_id, engine))
        if hit is not None:
            return float(hit)
        return float(self._runtimes[(self._nearest(q, engine), engine)])

    def predict_bytes_scanned(self, q: LogicalQuery) -> float:
        hit = self._bytes.get(q.query_id)
        if hit is not None:
            return float(hit)
        return float(self._bytes[self._nearest(q, None)])


def load_calibration_csv(path):
    """CSV columns: query_id, engine, runtime_s, bytes_scanned."""
    runtimes: dict[tuple[str, EngineId], float] = {}
    scan_bytes: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            qid = row["query_id"]
            runtimes[(qid, EngineId(row["engine"]))] = float(row["runtime_s"])
            scan_bytes[qid] = float(row["bytes_scanned"])
    return runtimes, scan_bytes


# ---------------------------------------------------------------------------
# Analytical-model constants and their fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProvisioningConstants:
    """Amdahl-style split of a query's runtime into scalable and fixed parts."""

    c1: float
    c2: float
    base_vcpus: int
    residual: float = 0.0


@dataclass(frozen=True)
class TxnModelConstants:
    """Latency model a / (M - rho_t) + b, defined for rho_t < M."""

    a: float
    b: float
    m: float
    residual: float = 0.0


def fit_provisioning_constants(
    observations: Sequence[tuple[float, float, float]], base_vcpus: int
) -> ProvisioningConstants:
    """Least-squares fit of (c1, c2) from (G, dest_vcpus, measured runtime)
    triples, minimizing sum((R - (c1*(b/d) + c2) * G)^2). Exact normal-equation
    solve; needs at least two distinct destination vcpu counts.
    """
    if len({d for _, d, _ in observations}) < 2:
        raise DegenerateDesign("need observations at >= 2 distinct vcpu counts")
    g = np.array([o[0] for o in observations], dtype=float)
    d = np.array([o[1] for o in observations], dtype=float)
    r = np.array([o[2] for o in observations], dtype=float)
    design = np.column_stack([g * (base_vcpus / d), g])
    coef, _, rank, _ = np.linalg.lstsq(design, r, rcond=None)
    if rank < 2:
        raise DegenerateDesign("design matrix is rank deficient")
    resid = float(np.sum((design @ coef - r) ** 2))
    return ProvisioningConstants(c1=float(coef[0]), c2=float(coef[1]),
                                 base_vcpus=int(base_vcpus), residual=resid)


TXN_M_GRID_STEP = 1e-3
TXN_M_GRID_MAX = 2.0


def fit_txn_model(observations: Sequence[tuple[float, float]]) -> TxnModelConstants:
    """Fit a/(M - rho) + b by grid search over M with a closed-form (a, b)
    least-squares solve per grid point; returns the global minimizer.
    """
    rho = np.array([o[0] for o in observations], dtype=float)
    lat = np.array([o[1] for o in observations], dtype=float)
    if np.unique(rho).size < 3:
        raise DegenerateDesign("need >= 3 observations at distinct utilizations")
    if np.any(rho >= 1.0):
        raise DegenerateDesign("utilization observations must be < 1")
    max_rho = float(rho.max())
    n_steps = int(round((TXN_M_GRID_MAX - max_rho) / TXN_M_GRID_STEP))
    grid = max_rho + TXN_M_GRID_STEP * np.arange(1, n_steps + 1)

    best: Optional[TxnModelConstants] = None
    for m in grid:
        basis = np.column_stack([1.0 / (m - rho), np.ones_like(rho)])
        coef, _, _, _ = np.linalg.lstsq(basis, lat, rcond=None)
        a, b = float(coef[0]), float(coef[1])
        if a < 0.0:
            a, b = 0.0, float(lat.mean())
        sse = float(np.sum((a / (m - rho) + b - lat) ** 2))
        if best is None or sse < best.residual:
            best = TxnModelConstants(a=a, b=b, m=float(m), residual=sse)
    return best


def q_error(predicted: float, actual: float) -> float:
    """Symmetric multiplicative error max(p/a, a/p); 1 is a perfect prediction."""
    if not (predicted > 0.0 and actual > 0.0) or math.isinf(predicted) or math.isinf(actual):
        raise NonPositiveInput("q_error requires positive finite inputs")
    return max(predicted / actual, actual / predicted)
