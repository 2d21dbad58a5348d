#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "capalloc/agent.hpp"
#include "capalloc/clearing.hpp"
#include "capalloc/mechanisms.hpp"
#include "capalloc/metrics.hpp"

namespace capalloc {

struct UniformDist {
    double lo = 0.0;
    double hi = 1.0;
    double mean() const { return 0.5 * (lo + hi); }
};

// One experiment description. Defaults are the benchmark table's: n=20,
// m=100, alpha~U(5,20), beta~U(0.5,5), tau=0.5, g=1.0, R=1000.
struct ScenarioConfig {
    int n = 20;
    double m = 100.0;
    UniformDist alpha_dist{5.0, 20.0};
    UniformDist beta_dist{0.5, 5.0};
    double tau = 0.5;
    double g = 1.0;
    int replications = 1000;
    std::uint64_t master_seed = 42;
    AlgoConfig algo{};
    std::vector<MechanismKind> mechanism_set{
        MechanismKind::proposed(), MechanismKind::proportional(),
        MechanismKind::flat_contract(0.0), MechanismKind::no_enforcement()};
    double eps_part = 1e-6;
    std::optional<double> flat_fee;  // unset -> calibrated per scenario

    std::vector<double> tau_grid{0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> g_grid{0.0, 2.5, 5.0};
    std::vector<double> m_grid{50.0, 100.0, 150.0, 200.0};

    int horizon = 200;
    int shock_time = 50;
    double tau_post = 1.5;

    double drift_amplitude = 0.1;
    double drift_period = 40000.0;
    std::optional<int> drift_jump_time;
    double drift_jump_factor = 1.0;
    int regret_horizon = 10000;

    std::string movielens_path;
    double movielens_capacity_per_agent = 0.2;

    // Keys explicitly present in the parsed config file ("section.key");
    // lets subcommands apply their own defaults only when the user said
    // nothing (e.g. sweeps default to 50 replications).
    std::set<std::string> explicit_keys;

    bool has_explicit(const std::string& key) const { return explicit_keys.count(key) > 0; }
    ContractParams contract() const { return ContractParams{m, tau, g}; }
};

struct MetricStat {
    double mean = 0.0;
    double stddev = 0.0;  // population std (divide by R)
};

struct SweepRow {
    std::map<std::string, double> point;  // grid coordinates, e.g. {"tau": 0.5}
    std::string mechanism;
    MetricStat eff, gini_stat, fairness, participation, cost;
    double feasible_rate = 0.0;
    double violation_rate = 0.0;
    int nonconverged = 0;
    int replications = 0;
    std::map<std::string, double> extra;  // e.g. elasticities
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::uint64_t master_seed = 0;
    std::string config_digest;
};

struct ShockRound {
    int t = 0;
    double tau = 0.0;
    double g = 0.0;
    double mu = 0.0;
    double s = 0.0;
    double kkt_residual = 0.0;
    MetricsReport metrics;
    std::vector<double> allocations;
};

struct ShockSummary {
    std::optional<double> resilience_r;
    std::optional<int> reconvergence_time;  // unset when never re-converged
    double mu_post_oracle = 0.0;            // clearing price at the post-shock fees
    double mu_final = 0.0;
    double eff_pre = 0.0;
    double eff_post = 0.0;
};

struct ShockResult {
    std::vector<ShockRound> rounds;
    ShockSummary summary;
};

struct RegretPoint {
    int t = 0;
    double cumulative = 0.0;
};

struct RegretResult {
    std::vector<RegretPoint> curve;       // logarithmically spaced markers
    double final_cumulative = 0.0;
    std::optional<double> fitted_slope;   // log-log fit over T in [1e2, 1e4]
};

// Per-round fee paths over a horizon, with an optional one-time jump.
struct FeeSchedule {
    int horizon = 0;
    std::vector<double> tau_path;
    std::vector<double> g_path;
    std::optional<int> shock_time;

    static FeeSchedule constant(int horizon, double tau, double g);
    static FeeSchedule step_tau(int horizon, double tau_pre, double tau_post, int t0, double g);
    void validate() const;
};

// n i.i.d. (alpha, beta) draws from the configured uniforms, on a substream
// derived from (master_seed, replication_index); bit-reproducible.
std::vector<AgentParams> sample_population(const ScenarioConfig& cfg, std::uint64_t replication_index);

// R replications of sample -> allocate -> measure, aggregated to mean/std.
SweepRow run_replications(const ScenarioConfig& cfg, const MechanismKind& mechanism);

// One run_replications row per tau on cfg.tau_grid, first mechanism of the set.
SweepResult fee_sweep(const ScenarioConfig& cfg);

// Full tau x g factorial plus central-difference dEff/dtau at interior tau
// points (stored per row in extra["deff_dtau"], edge rows unmarked).
SweepResult sensitivity_grid(const ScenarioConfig& cfg);

// The primal-dual loop run live across the horizon with the fee path applied
// each round; resilience is measured on [t0-30, t0) vs the last 30 rounds,
// and re-convergence is the first post-shock time whose complementarity-aware
// residual stays within tol for 10 consecutive rounds.
ShockResult shock_run(const ScenarioConfig& cfg, const FeeSchedule& schedule,
                      std::uint64_t replication_index = 0);

// Repeated play against per-round clearing comparators under multiplicative
// sinusoidal alpha drift, diminishing steps eta_t ~ 1/sqrt(t).
RegretResult regret_experiment(const ScenarioConfig& cfg, std::uint64_t replication_index = 0);

// Oracle clearing price per capacity value.
std::vector<std::pair<double, double>> capacity_statics(const std::vector<AgentParams>& agents,
                                                        const ContractParams& c,
                                                        const std::vector<double>& m_grid);

// Number of worker threads for replication loops (CAPALLOC_THREADS, default 1).
int replication_threads();

}  // namespace capalloc
