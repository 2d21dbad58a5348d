"""Contract-clearing resource allocation under a shared capacity constraint."""

from ._capalloc import (  # noqa: F401
    AgentParams,
    AlgoConfig,
    Allocation,
    ClearingSolution,
    ContractParams,
    IngestReport,
    IterateRecord,
    MechanismKind,
    MetricsReport,
    RateDiagnostics,
    aggregate_demand,
    allocate,
    avg_cost,
    best_response,
    calibrate_flat_fee,
    clear_bisection,
    clear_decentralized,
    clear_stochastic,
    cost,
    demand_upper_bound,
    diagnose_rates,
    dual_update,
    dynamic_regret,
    efficiency,
    gini,
    load_movielens,
    participation_rate,
    payoff,
    price_of_fairness,
    proximal_best_response,
    resilience,
    valuation,
    __version__,
)
