#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "capalloc/agent.hpp"

namespace capalloc {

// Constant step: eta fixed every round; unset eta means "1/L for the
// instance at hand" (midpoint of the stable range (0, 2/L)).
struct ConstantStep {
    std::optional<double> eta;
};

// Diminishing schedule eta_t = eta0 / (t+1)^exponent.
struct DiminishingStep {
    double eta0 = 0.5;
    double exponent = 1.0;
};

using StepSchedule = std::variant<ConstantStep, DiminishingStep>;

struct AlgoConfig {
    StepSchedule step = ConstantStep{};
    double gamma = 1e-6;                    // proximal weight, > 0
    std::optional<double> tol_primal;       // unset -> 1e-6 * m
    double tol_dual = 1e-8;
    int max_iters = 100000;
    int mc_samples = 1;                     // M
    double noise_sigma = 0.0;               // std of demand-report noise
    double mu_init = 0.0;
    bool record_allocations = true;         // keep per-iteration allocation snapshots

    double resolved_tol_primal(double m) const;
};

struct IterateRecord {
    int t = 0;
    double mu = 0.0;                  // price the round's responses answered
    std::vector<double> allocations;  // empty when snapshots are disabled
    double s_hat = 0.0;
    double r_primal = 0.0;            // |S_hat - m|
    double r_dual = 0.0;              // |mu_{t+1} - mu_t|
};

using IterateTrace = std::vector<IterateRecord>;

struct ClearingSolution {
    std::vector<double> allocations;
    double mu_star = 0.0;
    bool converged = false;
    int iterations = 0;
    IterateTrace trace;
    double slack = 0.0;       // m - sum(x) when mu_star = 0
    double demand_gap = 0.0;  // |S(mu_star) - m| left by a jump in demand (g > 0)
};

struct RateDiagnostics {
    std::optional<double> contraction_kappa;          // max error ratio, unset if degenerate
    int fejer_violations = 0;
    std::vector<std::pair<int, double>> ergodic_residual_curve;  // (T, mean r_p up to T)
    double lipschitz_L = 0.0;
    double strong_mono_alpha = 0.0;  // empirical min |dS/dmu| over visited prices
};

// Sum of best responses at price mu; 0 for an empty population.
double aggregate_demand(const std::vector<AgentParams>& agents, const ContractParams& c,
                        double mu);

// Global Lipschitz constant of S on mu >= 0 for the log-linear family:
// sum_i alpha_i / (beta_i + tau)^2 (the slope magnitude is maximal at mu = 0
// with every agent active).
double lipschitz_bound(const std::vector<AgentParams>& agents, const ContractParams& c);

// Projected dual ascent step: max{0, mu + eta*(S_hat - m)}.
double dual_update(double mu, double eta, double s_hat, double m);

// Centralized oracle. Slack markets (S(0) <= m) clear at mu* = 0 with
// positive slack (complementary slackness); otherwise bisects the bracket
// [0, max_i alpha_i - tau] down to width < tol and returns the endpoint
// minimizing |S - m|. When g > 0 makes demand jump over m, no exact root
// exists; the residual is surfaced in demand_gap.
ClearingSolution clear_bisection(const std::vector<AgentParams>& agents,
                                 const ContractParams& c, double tol);

// Decentralized primal-dual loop: parallel proximal best responses, a
// Monte-Carlo demand estimate (noisy re-reports when noise_sigma > 0),
// projected dual ascent, residual stopping. Deterministic when
// noise_sigma = 0. Constant steps are validated against 2/lipschitz_bound.
ClearingSolution clear_decentralized(const std::vector<AgentParams>& agents,
                                     const ContractParams& c, const AlgoConfig& cfg,
                                     std::uint64_t rng_seed);

// Robbins-Monro variant: diminishing steps with exponent in [0.5, 1],
// additive truncated-Gaussian report noise, and stopping on trailing-window
// (50-iteration) residual means instead of single iterates.
ClearingSolution clear_stochastic(const std::vector<AgentParams>& agents,
                                  const ContractParams& c, const AlgoConfig& cfg,
                                  std::uint64_t rng_seed);

// Convergence-theory checks against an oracle price: empirical contraction
// factor, Fejer violations, running-average primal residuals, Lipschitz and
// strong-monotonicity estimates over the visited trajectory.
RateDiagnostics diagnose_rates(const IterateTrace& trace, double mu_star_oracle,
                               const std::vector<AgentParams>& agents,
                               const ContractParams& c);

}  // namespace capalloc
