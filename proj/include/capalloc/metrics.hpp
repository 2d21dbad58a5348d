#pragma once

#include <optional>
#include <vector>

#include "capalloc/agent.hpp"

namespace capalloc {

inline constexpr double kDefaultEpsPart = 1e-6;

struct MetricsReport {
    double efficiency = 0.0;
    double gini = 0.0;
    double fairness_one_minus_gini = 1.0;
    double participation = 0.0;
    double avg_cost = 0.0;
    std::optional<double> pof;
    std::optional<double> resilience_r;
    std::optional<double> regret;
};

// Total surplus net of fees: sum(V_i - C_i) - tau*sum(x) - g*|{x_i > eps}|.
double efficiency(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                  const ContractParams& c, double eps_part = kDefaultEpsPart);

// Mean absolute pairwise difference normalized by 2*n^2*mean; 0 for an
// all-zero vector (equality of nothing).
double gini(const std::vector<double>& x);

// Fraction of entries strictly above eps_part.
double participation_rate(const std::vector<double>& x, double eps_part = kDefaultEpsPart);

// Mean over participants of unit_price * x_i + g; 0 when nobody participates.
double avg_cost(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                const ContractParams& c, double unit_price,
                double eps_part = kDefaultEpsPart);

// Maximum of the efficiency objective over feasible allocations. For g = 0
// this is the clearing solution; for g > 0 the participant set is searched
// exactly up to 15 agents and by greedy drop above that.
struct MaxEfficiencyResult {
    double value = 0.0;
    std::vector<double> allocation;
    bool exact = true;  // false when the greedy participant search was used
};
MaxEfficiencyResult max_efficiency(const std::vector<AgentParams>& agents,
                                   const ContractParams& c,
                                   double eps_part = kDefaultEpsPart);

// max-efficiency / efficiency(fair_allocation); unset when the denominator
// is <= 0. Rejects infeasible fair allocations.
std::optional<double> price_of_fairness(const std::vector<AgentParams>& agents,
                                        const ContractParams& c,
                                        const std::vector<double>& fair_allocation,
                                        double eps_part = kDefaultEpsPart);

// Post-shock over pre-shock efficiency; unset when eff_pre <= 0.
std::optional<double> resilience(double eff_pre, double eff_post);

// Cumulative efficiency gap between per-round clearing comparators and the
// realized play. Terms are summed as-is (no clamping).
double dynamic_regret(const std::vector<std::vector<double>>& realized,
                      const std::vector<std::vector<AgentParams>>& agents_per_round,
                      const std::vector<ContractParams>& c_per_round,
                      double eps_part = kDefaultEpsPart);

MetricsReport basic_report(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                           const ContractParams& c, double unit_price,
                           double eps_part = kDefaultEpsPart);

}  // namespace capalloc
