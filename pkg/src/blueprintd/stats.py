"""Small shared numeric helpers: weighted percentiles, geometric mean."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import EmptySamples


def percentile(values: Sequence[float], p: float, weights: Optional[Sequence[float]] = None) -> float:
    """Nearest-rank weighted percentile: the smallest sample whose cumulative
    weight reaches p of the total. Deterministic for tied values.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptySamples("percentile of an empty sample set")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape:
            raise ValueError("weights must match values")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    total = cum[-1]
    if total <= 0:
        raise EmptySamples("percentile with zero total weight")
    idx = int(np.searchsorted(cum, p * total, side="left"))
    return float(v[order[min(idx, v.size - 1)]])


def geometric_mean(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptySamples("geometric mean of an empty sample set")
    if np.any(v <= 0):
        raise ValueError("geometric mean requires positive values")
    return float(np.exp(np.mean(np.log(v))))
