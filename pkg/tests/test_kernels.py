import math

import numpy as np
import pytest

from blueprintd import kernels
from blueprintd.blueprint import ENGINES
from blueprintd.comparator import scalarize
from blueprintd.gen import make_search_instance
from blueprintd.scoring import score_blueprint


@pytest.fixture(scope="module")
def instance():
    return make_search_instance(seed=7, n_queries=7)


@pytest.fixture(scope="module")
def context(instance):
    current = {e: instance.inputs.current.provisionings[e] for e in ENGINES}
    return instance.inputs.context(current)


def random_rows(context, n, seed, partial=False):
    rng = np.random.default_rng(seed)
    n_q = context.padj.shape[0]
    lo = -1 if partial else 0
    return rng.integers(lo, 3, size=(n, n_q)).astype(np.int8)


def test_backends_agree(instance, context):
    rows = random_rows(context, 500, seed=1, partial=True)
    out_np = kernels.score_batch_numpy(rows, *context.kernel_args)
    out_nb = kernels.score_batch_numba(rows, *context.kernel_args)
    names = ("w", "t_t", "cost", "feasible", "p90", "txn")
    for name, a, b in zip(names, out_nb, out_np):
        if name == "feasible":
            assert np.array_equal(a, b)
            continue
        assert np.array_equal(np.isfinite(a), np.isfinite(b)), name
        fin = np.isfinite(a)
        assert np.allclose(a[fin], b[fin], rtol=1e-9, atol=1e-12), name


def test_backends_agree_across_provisionings(instance):
    from blueprintd.search import enumerate_neighbor_provisionings

    current = {e: instance.inputs.current.provisionings[e] for e in ENGINES}
    for prov in enumerate_neighbor_provisionings(current, instance.lattice)[:6]:
        ctx = instance.inputs.context(prov)
        rows = random_rows(ctx, 200, seed=2, partial=True)
        out_np = kernels.score_batch_numpy(rows, *ctx.kernel_args)
        out_nb = kernels.score_batch_numba(rows, *ctx.kernel_args)
        fin = np.isfinite(out_np[0])
        assert np.array_equal(np.isfinite(out_nb[0]), fin)
        assert np.allclose(out_nb[0][fin], out_np[0][fin], rtol=1e-9)


def test_kernel_matches_reference_scoring(instance, context):
    """Batch W must equal scalarize(score_blueprint(...)) for complete rows."""
    inputs = instance.inputs
    rows = random_rows(context, 40, seed=3, partial=False)
    scores = context.score_batch(rows)
    for i in range(rows.shape[0]):
        bp = context.blueprint(rows[i])
        vec = score_blueprint(bp, inputs.current, inputs.workload, inputs.models, inputs.load)
        want = scalarize(vec, inputs.metrics, inputs.slo)
        got = scores.w[i]
        if math.isinf(want):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(want, rel=1e-9)
            assert scores.cost[i] == pytest.approx(vec.operating_cost, rel=1e-9)
            assert scores.t_t[i] == pytest.approx(vec.transition_time_s, rel=1e-9)
            assert scores.txn[i] == pytest.approx(vec.txn_latency, rel=1e-9)


def test_disallowed_assignment_is_invalid(instance):
    # pause the warehouse: routing anything to it must yield an infeasible row
    from blueprintd.blueprint import EngineId, Provisioning, serverless_provisioning

    prov = {
        EngineId.ROW_STORE: instance.inputs.current.provisionings[EngineId.ROW_STORE],
        EngineId.WAREHOUSE: Provisioning(EngineId.WAREHOUSE, "wh.node", 0, 4),
        EngineId.SCAN_SERVICE: serverless_provisioning(),
    }
    ctx = instance.inputs.context(prov)
    n_q = ctx.padj.shape[0]
    row = np.zeros((1, n_q), dtype=np.int8)
    row[0, 0] = ENGINES.index(EngineId.WAREHOUSE)
    out = ctx.score_batch(row)
    assert math.isinf(out.w[0])
    assert not out.feasible[0]


def test_kernel_deterministic(context):
    rows = random_rows(context, 300, seed=4, partial=True)
    a = kernels.score_batch(rows, *context.kernel_args)
    b = kernels.score_batch(rows.copy(), *context.kernel_args)
    for x, y in zip(a, b):
        assert np.array_equal(x, y, equal_nan=True)


def test_unassigned_rows_score_base_state(context):
    n_q = context.padj.shape[0]
    empty = np.full((1, n_q), -1, dtype=np.int8)
    out = context.score_batch(empty)
    # nothing routed: no latencies, cost is nodes + base placement storage
    assert out.feasible[0]
    assert out.p90[0] == 0.0
    assert out.cost[0] == pytest.approx(context.node_cost + context.base_storage)
