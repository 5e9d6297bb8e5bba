"""Command-line entry points: scenario simulation, one-shot planning, model
fitting, routing evaluation, the prediction-error sensitivity harness, and
the search-strategy comparison.

Exit codes: 0 success, 2 usage/config/IO error, 3 no feasible blueprint.
All commands are deterministic under a fixed seed; BLUEPRINTD_SEED overrides
--seed when set. Output files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .blueprint import ENGINES
from .errors import (
    BlueprintdError,
    ConfigError,
    DegenerateDesign,
    NoFeasibleBlueprint,
    SearchSpaceTooLarge,
)
from .gen import make_separable_workload
from .predictor import (
    NoisyOraclePredictor,
    OraclePredictor,
    fit_provisioning_constants,
    fit_txn_model,
)
from .queryir import WorkloadWindow
from .router import RouterConfig, routing_slowdown, train_routing_forest, routing_features
from .search import (
    PlanningInputs,
    exhaustive_search,
    naive_greedy,
    plan,
    random_baseline,
)
from .simulator import cold_start_inputs, load_scenario, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

SEED_ENV = "BLUEPRINTD_SEED"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump_json(path: Path, payload) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _effective_seed(args) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return args.seed


def _parse_float_list(spec: str, default_step: float = 0.2) -> list[float]:
    """Accept "0.1,0.2,0.4" or range syntax "-0.8..0.8[:step]"."""
    spec = spec.strip()
    if ".." in spec:
        body, _, step_s = spec.partition(":")
        lo_s, _, hi_s = body.partition("..")
        lo, hi = float(lo_s), float(hi_s)
        step = float(step_s) if step_s else default_step
        n = int(round((hi - lo) / step))
        return [round(lo + i * step, 10) for i in range(n + 1)]
    return [float(x) for x in spec.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = _effective_seed(args)
    log, summary = run_scenario(scenario, seed=seed)
    out = Path(args.out)
    _atomic_write(out / "metrics.csv", log.to_csv_text())
    _atomic_write(out / "events.json", log.events_json_text())
    _dump_json(out / "summary.json", summary)
    print(
        f"{scenario.name}: cost {summary['cost_initial_per_hour']:.3f} -> "
        f"{summary['cost_final_per_hour']:.3f} $/hr, "
        f"{summary['blueprint_changes']} blueprint change(s), "
        f"txn compliance {summary['compliance']['txn_overall']:.3f}, "
        f"query compliance {summary['compliance']['query_overall']:.3f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = _effective_seed(args)
    if seed is None:
        seed = scenario.seed
    truth = scenario.make_ground_truth(seed)
    predictor = scenario.make_predictor(truth)
    models = scenario.make_models(predictor)
    inputs = cold_start_inputs(scenario, models, truth)
    result = plan(
        inputs, scenario.make_lattice(), k=scenario.beam_width,
        router_cfg=scenario.router_cfg,
    )
    report = result.report()
    report["scenario"] = scenario.name
    report["seed"] = seed
    if args.out:
        _dump_json(Path(args.out), report)
    print(
        f"selected blueprint {report['digest']}: W = {report['w_dollars']:.4f} $, "
        f"cost {report['operating_cost_per_hour']:.4f} $/hr, "
        f"{report['candidates_scored']} candidates over "
        f"{report['provisionings_tried']} provisionings"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    rows = []
    with open(args.input, "r", encoding="utf-8", newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(rec)
    if args.kind == "provisioning":
        obs = [
            (float(r["g"]), float(r["dest_vcpus"]), float(r["runtime_s"])) for r in rows
        ]
        consts = fit_provisioning_constants(obs, base_vcpus=args.base_vcpus)
        payload = {
            "kind": "provisioning",
            "c1": consts.c1,
            "c2": consts.c2,
            "base_vcpus": consts.base_vcpus,
            "residual": consts.residual,
        }
    else:
        obs = [(float(r["utilization"]), float(r["latency_s"])) for r in rows]
        consts = fit_txn_model(obs)
        payload = {
            "kind": "txn",
            "a": consts.a,
            "b": consts.b,
            "m": consts.m,
            "residual": consts.residual,
        }
    if args.out:
        _dump_json(Path(args.out), payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# route-eval
# ---------------------------------------------------------------------------

def cmd_route_eval(args) -> int:
    seed = _effective_seed(args) or 0
    workload, truth = make_separable_workload(args.queries, seed)
    predicted = {
        (q.query_id, e): truth.base_runtime(q.query_id, e)
        for q in workload.queries
        for e in ENGINES
    }
    cfg = RouterConfig(seed=seed)
    forest = train_routing_forest(workload, predicted, cfg)

    rng = np.random.default_rng(seed + 1)
    decisions_forest = []
    decisions_random = []
    decisions_single = {e: [] for e in ENGINES}
    nodes_max = 0
    for q in workload.queries:
        runtimes = {e: truth.base_runtime(q.query_id, e) for e in ENGINES}
        ranking, tested = forest.predict_ranking_counted(
            routing_features(q, workload.catalog)
        )
        nodes_max = max(nodes_max, tested)
        decisions_forest.append((ranking[0], runtimes))
        decisions_random.append((ENGINES[int(rng.integers(0, len(ENGINES)))], runtimes))
        for e in ENGINES:
            decisions_single[e].append((e, runtimes))

    report = {
        "queries": args.queries,
        "seed": seed,
        "forest_slowdown": routing_slowdown(decisions_forest),
        "random_slowdown": routing_slowdown(decisions_random),
        "single_engine_slowdown": {
            e.value: routing_slowdown(decisions_single[e]) for e in ENGINES
        },
        "max_nodes_tested": nodes_max,
        "node_bound": forest.inference_node_bound(),
    }
    if args.out:
        _dump_json(Path(args.out), report)
    print(
        f"routing slowdown: forest {report['forest_slowdown']:.3f}x, "
        f"random {report['random_slowdown']:.3f}x, best single "
        f"{min(report['single_engine_slowdown'].values()):.3f}x "
        f"(nodes {nodes_max} <= bound {report['node_bound']})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sensitivity
# ---------------------------------------------------------------------------

def cmd_sensitivity(args) -> int:
    scenario = load_scenario(args.scenario)
    base_seed = _effective_seed(args)
    if base_seed is None:
        base_seed = scenario.seed
    fractions = _parse_float_list(args.fractions)
    errors = _parse_float_list(args.errors)
    truth = scenario.make_ground_truth(base_seed)
    lattice = scenario.make_lattice()

    baseline = plan(
        cold_start_inputs(scenario, scenario.make_models(OraclePredictor(truth)), truth),
        lattice, k=scenario.beam_width,
    )
    cells = []
    for fraction in fractions:
        for error in errors:
            for s in range(args.seeds):
                seed = base_seed + s
                predictor = NoisyOraclePredictor(truth, fraction, error, seed)
                inputs = cold_start_inputs(scenario, scenario.make_models(predictor), truth)
                try:
                    result = plan(inputs, lattice, k=scenario.beam_width)
                    cells.append(
                        {
                            "fraction": fraction,
                            "error": error,
                            "seed": seed,
                            "digest": result.blueprint.digest(),
                            "w_dollars": result.w,
                            "changed": result.blueprint.digest() != baseline.blueprint.digest(),
                        }
                    )
                except NoFeasibleBlueprint:
                    cells.append(
                        {
                            "fraction": fraction,
                            "error": error,
                            "seed": seed,
                            "digest": None,
                            "w_dollars": None,
                            "changed": True,
                        }
                    )
    report = {
        "scenario": scenario.name,
        "base_seed": base_seed,
        "seeds": args.seeds,
        "baseline_digest": baseline.blueprint.digest(),
        "baseline_w": baseline.w,
        "fractions": fractions,
        "errors": errors,
        "cells": cells,
    }
    if args.out:
        _dump_json(Path(args.out), report)
    changed = sum(1 for c in cells if c["changed"])
    print(
        f"sensitivity grid {len(fractions)}x{len(errors)}x{args.seeds}: "
        f"{changed}/{len(cells)} cells change the selection "
        f"(baseline {report['baseline_digest']})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# search-compare
# ---------------------------------------------------------------------------

def cmd_search_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = _effective_seed(args)
    if seed is None:
        seed = scenario.seed
    truth = scenario.make_ground_truth(seed)
    models = scenario.make_models(OraclePredictor(truth))
    inputs = cold_start_inputs(scenario, models, truth)

    workload = inputs.workload
    if args.workload:
        from .queryir import load_workload_records

        queries = load_workload_records(args.workload)
        workload = WorkloadWindow(
            queries=queries,
            txn_rate_per_s=workload.txn_rate_per_s,
            catalog=workload.catalog,
            window_hours=workload.window_hours,
        )
    if len(workload.queries) > args.max_queries:
        keep = sorted(
            workload.queries, key=lambda q: (-q.arrival_rate, q.query_id)
        )[: args.max_queries]
        workload = WorkloadWindow(
            queries=tuple(keep),
            txn_rate_per_s=workload.txn_rate_per_s,
            catalog=workload.catalog,
            window_hours=workload.window_hours,
        )
    inputs = PlanningInputs(
        workload=workload, current=inputs.current, models=models,
        slo=inputs.slo, metrics=inputs.metrics, load=inputs.load, caps=inputs.caps,
    )
    lattice = scenario.make_lattice()

    beam = plan(inputs, lattice, k=args.beam_width)
    _, exhaustive = exhaustive_search(inputs, lattice)
    greedy = naive_greedy(inputs)
    random_best = random_baseline(inputs, seed=seed)

    report = {
        "queries": len(workload.queries),
        "beam_width": args.beam_width,
        "seed": seed,
        "w": {
            "beam": beam.w,
            "exhaustive": exhaustive.w,
            "naive_greedy": greedy.w,
            "random_10000": random_best.w,
        },
        "beam_matches_exhaustive": beam.w == exhaustive.w,
        "candidates": {
            "beam": beam.candidates_scored,
            "exhaustive": exhaustive.candidates_scored,
        },
    }
    if args.out:
        _dump_json(Path(args.out), report)
    for name in ("beam", "exhaustive", "naive_greedy", "random_10000"):
        print(f"{name:>14}: W = {report['w'][name]:.6f} $")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blueprintd",
        description="Cost-based blueprint planner and engine simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario end to end")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="one planning pass from a scenario's cold start")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("fit", help="fit model constants from observation CSVs")
    p.add_argument("--kind", choices=("provisioning", "txn"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--base-vcpus", type=int, default=4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("route-eval", help="routing-forest quality harness")
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_route_eval)

    p = sub.add_parser("sensitivity", help="prediction-error sensitivity grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--fractions", default="0.1,0.2,0.4,0.8")
    p.add_argument("--errors", default="-0.8..0.8")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("search-compare", help="beam vs exhaustive/greedy/random")
    p.add_argument("--scenario", required=True)
    p.add_argument("--workload", default=None)
    p.add_argument("--max-queries", type=int, default=12)
    p.add_argument("--beam-width", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_search_compare)

    return parser


_LEADING_DASH_FLAGS = ("--errors", "--fractions")


def _normalize_argv(argv) -> list:
    """Let value flags accept leading-dash values (e.g. --errors -0.8..0.8)."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _LEADING_DASH_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(_normalize_argv(list(argv)))
    try:
        return args.func(args)
    except NoFeasibleBlueprint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, SearchSpaceTooLarge, DegenerateDesign) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlueprintdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
