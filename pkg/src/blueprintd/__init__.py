"""blueprintd: cost-based blueprint planning for multi-engine data
infrastructures, with a deterministic simulator of three synthetic engines.

A blueprint bundles the engine set, per-engine provisionings, table placement,
and the query routing policy. The planner scores candidate blueprints with
analytical run-time/queueing/cost models, searches them with a greedy beam per
nearby provisioning, and the simulator replays workloads against the chosen
blueprints end to end (triggers, transitions, online routing).
"""

from .blueprint import (
    Blueprint,
    ChangeKind,
    EngineId,
    Provisioning,
    RoutingPolicy,
    TablePlacement,
    TransitionPlan,
    diff_blueprints,
    eligible_engines,
    validate_blueprint,
)
from .comparator import CurrentMetrics, SloConfig, compare, penalty, scalarize
from .predictor import (
    NoisyOraclePredictor,
    OraclePredictor,
    ProvisioningConstants,
    TablePredictor,
    TxnModelConstants,
    fit_provisioning_constants,
    fit_txn_model,
    q_error,
)
from .queryir import (
    DatasetCatalog,
    FeatureGraph,
    Histogram,
    LogicalQuery,
    WorkloadWindow,
    build_feature_graph,
    estimate_selectivity,
    parse_query,
    render_query,
)
from .router import RoutingForest, route, routing_slowdown, train_routing_forest
from .scoring import (
    LoadState,
    PricingCatalog,
    ScoringModels,
    VectorScore,
    adjust_for_provisioning,
    adjust_txn_utilization,
    adjust_utilization,
    operating_cost,
    queueing_delay,
    score_blueprint,
    transition_time_cost,
    txn_latency,
)
from .search import (
    PlanningInputs,
    ProvisioningLattice,
    beam_search,
    enumerate_neighbor_provisionings,
    exhaustive_search,
    order_queries,
    plan,
)
from .simulator import (
    EngineGroundTruth,
    MetricsLog,
    ScenarioConfig,
    TriggerConfig,
    apply_transition,
    evaluate_triggers,
    load_scenario,
    percentile,
    run_scenario,
)

__version__ = "0.1.0"
