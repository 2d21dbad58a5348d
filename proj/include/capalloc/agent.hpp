#pragma once

#include <cstdint>
#include <vector>

namespace capalloc {

// One participant in the log-linear family: valuation alpha*log(1+x),
// cost beta*x. The free functions below (value, cost, and their first
// derivatives) are the full interface the solvers consume, so another
// strictly-concave-valuation / convex-cost family can be added alongside
// without touching the engines.
struct AgentParams {
    double alpha = 1.0;  // valuation coefficient, > 0
    double beta = 1.0;   // marginal cost, > 0
    std::uint32_t id = 0;

    AgentParams() = default;
    AgentParams(double alpha_, double beta_, std::uint32_t id_ = 0);
};

// Contract environment: shared capacity plus the two fees it levies.
struct ContractParams {
    double capacity_m = 1.0;  // > 0
    double fee_tau = 0.0;     // per-unit transaction fee, >= 0
    double fee_g = 0.0;       // fixed execution fee per participant, >= 0

    ContractParams() = default;
    ContractParams(double m, double tau, double g);
};

double valuation(const AgentParams& a, double x);
double marginal_valuation(const AgentParams& a, double x);
double cost(const AgentParams& a, double x);
double marginal_cost(const AgentParams& a, double x);

// V(x) - C(x) - (tau+mu)x - g*1{x>0}; exactly 0 at x = 0.
double payoff(const AgentParams& a, const ContractParams& c, double mu, double x);

// Demand at price mu: the interior candidate max{0, alpha/(beta+tau+mu) - 1},
// gated so that an agent whose payoff would be negative (the fixed fee g can
// do that even when the FOC has an interior root) exits to 0. Payoff exactly
// 0 counts as participating.
double best_response(const AgentParams& a, const ContractParams& c, double mu);

// argmax over x >= 0 of payoff(x; mu) - (gamma/2)(x - x_prev)^2, solved in
// closed form (the stationarity condition is a quadratic in x). Converges to
// best_response as gamma -> 0.
double proximal_best_response(const AgentParams& a, const ContractParams& c, double mu,
                              double x_prev, double gamma);

// Demand at zero total price, max{0, alpha/beta - 1}; an upper bound on
// best_response for every mu, tau, g.
double demand_upper_bound(const AgentParams& a);

}  // namespace capalloc
