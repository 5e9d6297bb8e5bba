"""Batch scoring kernels for candidate assignment vectors.

Search scores hundreds of thousands of query-to-engine assignment vectors per
planning pass (exhaustive enumeration alone is 3^q rows per provisioning), so
this inner loop is implemented twice: a numba @njit kernel and a vectorized
pure-numpy fallback. The backend is chosen at import time; set
BLUEPRINTD_NO_NUMBA=1 to force the numpy path. benchmarks/bench_kernels.py
compares the two.

Both implementations take the same flat argument pack (see ARG_ORDER) and
return (w, t_t, cost, feasible, p90, txn) arrays: scalarized dollar score,
transition-time seconds, operating cost $/hr, feasibility, overall weighted
p90 latency, and predicted transaction latency per row.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "BLUEPRINTD_NO_NUMBA"

ARG_ORDER = (
    "assign",            # (N, Q) int8;  -1 = unassigned, else engine index
    "padj",              # (Q, 3) float64 adjusted runtimes, +inf when paused
    "allowed",           # (Q, 3) bool   capability + activity mask
    "rates",             # (Q,) float64  arrivals/hour (also percentile weights)
    "class_idx",         # (Q,) int64    SLO class per query
    "class_slos",        # (C,) float64  p90 ceiling per class
    "scan_cost_rate",    # (Q,) float64  $/hr if routed to the scan service
    "tq_indptr",         # (Q+1,) int64  CSR: tables referenced per query
    "tq_indices",        # (nnz,) int64
    "base_placed",       # (T, 3) bool   writer + universal placement template
    "extra_move_time",   # (T, 3) float64 move seconds if newly placed (0 if current)
    "extra_move_cost",   # (T, 3) float64
    "storage_rate",      # (T, 3) float64 $/hr while placed
    "base_storage",      # float
    "base_move_time",    # (3,) float64  moves owed by the base template
    "base_move_cost",    # float
    "node_cost",         # float $/hr of this provisioning
    "prov_time",         # (3,) float64  provisioning-change seconds per engine
    "prov_cost",         # float
    "measured_util",     # (3,) float64
    "observed_sum",      # (3,) float64  observed runtime seconds last window
    "fallback_const",    # float
    "window_h",          # float
    "pct",               # float (0.9): SLO percentile, also the M/M/1 q
    "eps",               # float overload guard
    "scan_idx",          # int (queue-free serverless engine)
    "txn_rate",          # float per second
    "rho_t_meas",        # float measured txn-engine utilization
    "txn_vcpu_ratio",    # float current/candidate vcpus (0 when paused)
    "txn_a", "txn_b", "txn_m",
    "t_slo",             # float txn p90 ceiling
    "rs_idx",            # int transactional engine index
    "rowstore_active",   # bool
    "pen_gamma_c0",      # float penalty**gamma * C0, precomputed
    "t_b_h",             # float benefit period in hours
)


def _weighted_p90(lat, wt, cls, m, want_class, pct, vals, ws):
    """Nearest-rank weighted percentile over class members (all when -1).

    Sorts the (value, weight) scratch pairs in place with an insertion sort:
    the member count is small and this avoids per-row argsort allocations.
    """
    mc = 0
    total = 0.0
    for i in range(m):
        if want_class >= 0 and cls[i] != want_class:
            continue
        vals[mc] = lat[i]
        ws[mc] = wt[i]
        total += wt[i]
        mc += 1
    if mc == 0 or total <= 0.0:
        return 0.0
    for i in range(1, mc):
        v = vals[i]
        w = ws[i]
        j = i - 1
        while j >= 0 and vals[j] > v:
            vals[j + 1] = vals[j]
            ws[j + 1] = ws[j]
            j -= 1
        vals[j + 1] = v
        ws[j + 1] = w
    target = pct * total
    acc = 0.0
    for i in range(mc):
        acc += ws[i]
        if acc >= target:
            return vals[i]
    return vals[mc - 1]


def _score_batch_loop(
    assign, padj, allowed, rates, class_idx, class_slos, scan_cost_rate,
    tq_indptr, tq_indices, base_placed, extra_move_time, extra_move_cost,
    storage_rate, base_storage, base_move_time, base_move_cost, node_cost,
    prov_time, prov_cost, measured_util, observed_sum, fallback_const,
    window_h, pct, eps, scan_idx, txn_rate, rho_t_meas, txn_vcpu_ratio,
    txn_a, txn_b, txn_m, t_slo, rs_idx, rowstore_active, pen_gamma_c0, t_b_h,
):
    n_rows, n_q = assign.shape
    n_tables = base_placed.shape[0]
    n_classes = class_slos.shape[0]

    w_out = np.empty(n_rows)
    tt_out = np.empty(n_rows)
    c_out = np.empty(n_rows)
    feas_out = np.zeros(n_rows, dtype=np.bool_)
    p90_out = np.empty(n_rows)
    txn_out = np.empty(n_rows)

    cand = np.zeros(3)
    arr = np.zeros(3)
    wait = np.zeros(3)
    serial = np.zeros(3)
    lat = np.empty(n_q)
    wt = np.empty(n_q)
    cls = np.empty(n_q, dtype=np.int64)
    vals = np.empty(n_q)
    ws = np.empty(n_q)
    stamp = np.full((n_tables, 3), -1, dtype=np.int64)

    for n in range(n_rows):
        valid = True
        for e in range(3):
            cand[e] = 0.0
            arr[e] = 0.0
        for qi in range(n_q):
            e = assign[n, qi]
            if e < 0:
                continue
            if not allowed[qi, e]:
                valid = False
                break
            cand[e] += rates[qi] * window_h * padj[qi, e]
            arr[e] += rates[qi] * window_h
        if not valid:
            w_out[n] = math.inf
            tt_out[n] = 0.0
            c_out[n] = 0.0
            feas_out[n] = False
            p90_out[n] = math.inf
            txn_out[n] = math.inf
            continue

        feasible = True
        for e in range(3):
            wait[e] = 0.0
            if arr[e] <= 0.0 or e == scan_idx:
                continue
            if observed_sum[e] > 0.0:
                rho = measured_util[e] * cand[e] / observed_sum[e]
            else:
                rho = fallback_const * cand[e]
            if rho < 0.0:
                rho = 0.0
            if rho > 1.0:
                rho = 1.0
            if rho >= 1.0 - eps:
                wait[e] = math.inf
                continue
            k = cand[e] / arr[e]
            if k > 0.0 and rho > 1.0 - pct:
                wait[e] = -k / (1.0 - rho) * math.log((1.0 - pct) / rho)

        m = 0
        for qi in range(n_q):
            e = assign[n, qi]
            if e < 0:
                continue
            value = padj[qi, e] + wait[e]
            if not np.isfinite(value):
                feasible = False
            lat[m] = value
            wt[m] = rates[qi]
            cls[m] = class_idx[qi]
            m += 1

        p90_all = math.inf
        if feasible:
            p90_all = _weighted_p90(lat, wt, cls, m, -1, pct, vals, ws)
            for c in range(n_classes):
                pv = _weighted_p90(lat, wt, cls, m, c, pct, vals, ws)
                if pv > class_slos[c]:
                    feasible = False
                    break

        txn_l = 0.0
        if txn_rate > 0.0:
            if not rowstore_active:
                feasible = False
                txn_l = math.inf
            else:
                # Only the query-attributable share of measured utilization
                # moves with the routing; the remainder (transactions) stays.
                q_obs = observed_sum[rs_idx] / (window_h * 3600.0)
                if q_obs > rho_t_meas:
                    q_obs = rho_t_meas
                if observed_sum[rs_idx] > 0.0:
                    moved = q_obs * cand[rs_idx] / observed_sum[rs_idx]
                else:
                    moved = fallback_const * cand[rs_idx]
                rho_t = (rho_t_meas - q_obs + moved) * txn_vcpu_ratio
                if rho_t < 0.0:
                    rho_t = 0.0
                if rho_t > 1.0:
                    rho_t = 1.0
                if rho_t >= txn_m:
                    feasible = False
                    txn_l = math.inf
                else:
                    txn_l = txn_a / (txn_m - rho_t) + txn_b
                    if txn_l > t_slo:
                        feasible = False

        storage = base_storage
        c_t = prov_cost + base_move_cost
        for e in range(3):
            serial[e] = prov_time[e] + base_move_time[e]
        scan_dollars = 0.0
        for qi in range(n_q):
            e = assign[n, qi]
            if e < 0:
                continue
            if e == scan_idx:
                scan_dollars += scan_cost_rate[qi]
            for ti in range(tq_indptr[qi], tq_indptr[qi + 1]):
                t = tq_indices[ti]
                if base_placed[t, e] or stamp[t, e] == n:
                    continue
                stamp[t, e] = n
                storage += storage_rate[t, e]
                serial[e] += extra_move_time[t, e]
                c_t += extra_move_cost[t, e]

        cost = node_cost + scan_dollars + storage
        t_t = serial[0]
        if serial[1] > t_t:
            t_t = serial[1]
        if serial[2] > t_t:
            t_t = serial[2]

        c_out[n] = cost
        tt_out[n] = t_t
        feas_out[n] = feasible
        p90_out[n] = p90_all
        txn_out[n] = txn_l
        if feasible:
            w_out[n] = pen_gamma_c0 * (t_t / 3600.0) + c_t + cost * t_b_h
        else:
            w_out[n] = math.inf

    return w_out, tt_out, c_out, feas_out, p90_out, txn_out


def _score_batch_numpy(
    assign, padj, allowed, rates, class_idx, class_slos, scan_cost_rate,
    tq_indptr, tq_indices, base_placed, extra_move_time, extra_move_cost,
    storage_rate, base_storage, base_move_time, base_move_cost, node_cost,
    prov_time, prov_cost, measured_util, observed_sum, fallback_const,
    window_h, pct, eps, scan_idx, txn_rate, rho_t_meas, txn_vcpu_ratio,
    txn_a, txn_b, txn_m, t_slo, rs_idx, rowstore_active, pen_gamma_c0, t_b_h,
    chunk=32768,
):
    n_rows, n_q = assign.shape
    n_tables = base_placed.shape[0]
    touch = np.zeros((n_q, n_tables), dtype=np.float64)
    for qi in range(n_q):
        touch[qi, tq_indices[tq_indptr[qi]:tq_indptr[qi + 1]]] = 1.0

    w_out = np.empty(n_rows)
    tt_out = np.empty(n_rows)
    c_out = np.empty(n_rows)
    feas_out = np.empty(n_rows, dtype=bool)
    p90_out = np.empty(n_rows)
    txn_out = np.empty(n_rows)

    padj_safe = np.where(np.isfinite(padj), padj, 0.0)
    work = rates[:, None] * window_h * padj_safe        # (Q, 3)
    arrivals_w = rates * window_h
    q_range = np.arange(n_q)

    def nearest_rank(sorted_vals, sorted_wts, member):
        """Row-wise nearest-rank percentile over sorted member entries."""
        wts = np.where(member, sorted_wts, 0.0)
        cum = np.cumsum(wts, axis=1)
        total = cum[:, -1]
        target = pct * total
        idx = np.minimum(np.sum(cum < target[:, None], axis=1), n_q - 1)
        member_vals = np.where(member, sorted_vals, -math.inf)
        carried = np.maximum.accumulate(member_vals, axis=1)
        pick = np.take_along_axis(carried, idx[:, None], axis=1)[:, 0]
        return np.where(total > 0.0, pick, 0.0), total

    for start in range(0, n_rows, chunk):
        a = assign[start:start + chunk]
        n = a.shape[0]
        rows = np.arange(n)
        assigned = a >= 0
        ae = np.where(assigned, a, 0).astype(np.int64)

        ok = np.where(assigned, allowed[q_range[None, :], ae], True)
        valid = ok.all(axis=1)

        masks = [(assigned & (a == e)).astype(np.float64) for e in range(3)]
        cand = np.stack([masks[e] @ work[:, e] for e in range(3)], axis=1)   # (n, 3)
        arr = np.stack([masks[e] @ arrivals_w for e in range(3)], axis=1)

        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(
                observed_sum[None, :] > 0.0,
                measured_util[None, :] * cand / np.where(observed_sum[None, :] > 0.0,
                                                         observed_sum[None, :], 1.0),
                fallback_const * cand,
            )
            rho = np.clip(rho, 0.0, 1.0)
            k = np.where(arr > 0.0, cand / np.where(arr > 0.0, arr, 1.0), 0.0)
            wait = np.where(
                (k > 0.0) & (rho > 1.0 - pct),
                -k / (1.0 - rho) * np.log((1.0 - pct) / np.where(rho > 0.0, rho, 1.0)),
                0.0,
            )
        wait = np.where(rho >= 1.0 - eps, math.inf, wait)
        wait[:, scan_idx] = 0.0
        wait = np.where(arr > 0.0, wait, 0.0)

        lat = padj[q_range[None, :], ae] + wait[rows[:, None], ae]
        lat = np.where(assigned, lat, math.inf)
        weights = np.where(assigned, rates[None, :], 0.0)
        feasible = valid & ~np.any(assigned & ~np.isfinite(lat), axis=1)

        order = np.argsort(np.where(assigned, lat, math.inf), axis=1)
        sorted_lat = np.take_along_axis(lat, order, axis=1)
        sorted_wt = np.take_along_axis(weights, order, axis=1)
        sorted_cls = np.take_along_axis(
            np.broadcast_to(class_idx[None, :], a.shape).copy(), order, axis=1
        )
        sorted_assigned = np.take_along_axis(assigned, order, axis=1)

        p90_all, _ = nearest_rank(sorted_lat, sorted_wt, sorted_assigned)
        p90_all = np.where(feasible, p90_all, math.inf)

        for c in range(class_slos.shape[0]):
            member = sorted_assigned & (sorted_cls == c)
            pv, total = nearest_rank(sorted_lat, sorted_wt, member)
            feasible &= (total <= 0.0) | (pv <= class_slos[c])

        txn_l = np.zeros(n)
        if txn_rate > 0.0:
            if not rowstore_active:
                feasible = np.zeros_like(feasible)
                txn_l[:] = math.inf
            else:
                obs_rs = observed_sum[rs_idx]
                q_obs = min(obs_rs / (window_h * 3600.0), rho_t_meas)
                if obs_rs > 0.0:
                    moved = q_obs * cand[:, rs_idx] / obs_rs
                else:
                    moved = fallback_const * cand[:, rs_idx]
                rho_t = np.clip((rho_t_meas - q_obs + moved) * txn_vcpu_ratio, 0.0, 1.0)
                sat = rho_t >= txn_m
                txn_l = np.where(
                    sat, math.inf, txn_a / np.where(sat, 1.0, txn_m - rho_t) + txn_b
                )
                feasible &= ~sat & (txn_l <= t_slo)

        scan_dollars = masks[scan_idx] @ scan_cost_rate

        storage = np.full(n, base_storage)
        serial = np.tile(prov_time + base_move_time, (n, 1))
        c_t = np.full(n, prov_cost + base_move_cost)
        for e in range(3):
            touched = (masks[e] @ touch) > 0.0                    # (n, T)
            extra = touched & ~base_placed[:, e][None, :]
            storage += extra @ storage_rate[:, e]
            serial[:, e] += extra @ extra_move_time[:, e]
            c_t += extra @ extra_move_cost[:, e]

        cost = node_cost + scan_dollars + storage
        t_t = serial.max(axis=1)
        w = np.where(feasible, pen_gamma_c0 * (t_t / 3600.0) + c_t + cost * t_b_h, math.inf)

        sl = slice(start, start + n)
        w_out[sl] = w
        tt_out[sl] = np.where(valid, t_t, 0.0)
        c_out[sl] = np.where(valid, cost, 0.0)
        feas_out[sl] = feasible
        p90_out[sl] = np.where(valid, p90_all, math.inf)
        txn_out[sl] = np.where(valid, txn_l, math.inf)

    return w_out, tt_out, c_out, feas_out, p90_out, txn_out


_numba_loop = None


def _compile_numba():
    """Jit the scalar loop once; the helper global is rebound to its jitted
    form first so the loop captures the compiled version.
    """
    global _numba_loop, _weighted_p90
    if _numba_loop is None:
        import numba

        if not hasattr(_weighted_p90, "py_func"):
            _weighted_p90 = numba.njit(cache=True)(_weighted_p90)
        _numba_loop = numba.njit(cache=True)(_score_batch_loop)
    return _numba_loop


def numba_enabled() -> bool:
    if os.environ.get(_ENV_FLAG, "").strip() not in ("", "0"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


ACTIVE_BACKEND = "numba" if numba_enabled() else "numpy"


def score_batch_numpy(*args):
    return _score_batch_numpy(*args)


def score_batch_numba(*args):
    return _compile_numba()(*args)


def score_batch(*args):
    """Dispatch to the active backend (BLUEPRINTD_NO_NUMBA=1 forces numpy)."""
    if ACTIVE_BACKEND == "numba":
        return score_batch_numba(*args)
    return score_batch_numpy(*args)
