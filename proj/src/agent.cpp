#include "capalloc/agent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace capalloc {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void check_x(double x) {
    if (!(x >= 0.0)) throw std::domain_error("allocation x must be >= 0");
}

}  // namespace

AgentParams::AgentParams(double alpha_, double beta_, std::uint32_t id_)
    : alpha(alpha_), beta(beta_), id(id_) {
    require(std::isfinite(alpha) && alpha > 0.0, "AgentParams: alpha must be positive and finite");
    require(std::isfinite(beta) && beta > 0.0, "AgentParams: beta must be positive and finite");
}

ContractParams::ContractParams(double m, double tau, double g)
    : capacity_m(m), fee_tau(tau), fee_g(g) {
    require(std::isfinite(m) && m > 0.0, "ContractParams: capacity_m must be positive and finite");
    require(std::isfinite(tau) && tau >= 0.0, "ContractParams: fee_tau must be >= 0 and finite");
    require(std::isfinite(g) && g >= 0.0, "ContractParams: fee_g must be >= 0 and finite");
}

double valuation(const AgentParams& a, double x) {
    check_x(x);
    return a.alpha * std::log1p(x);
}

double marginal_valuation(const AgentParams& a, double x) {
    check_x(x);
    return a.alpha / (1.0 + x);
}

double cost(const AgentParams& a, double x) {
    check_x(x);
    return a.beta * x;
}

double marginal_cost(const AgentParams& a, double x) {
    check_x(x);
    return a.beta;
}

double payoff(const AgentParams& a, const ContractParams& c, double mu, double x) {
    check_x(x);
    if (!(mu >= 0.0)) throw std::domain_error("price mu must be >= 0");
    if (x == 0.0) return 0.0;
    return valuation(a, x) - cost(a, x) - (c.fee_tau + mu) * x - c.fee_g;
}

double best_response(const AgentParams& a, const ContractParams& c, double mu) {
    if (!(mu >= 0.0)) throw std::domain_error("price mu must be >= 0");
    const double denom = a.beta + c.fee_tau + mu;
    const double candidate = a.alpha / denom - 1.0;
    if (candidate <= 0.0) return 0.0;
    // Fixed execution fee can make the interior optimum unprofitable; ties
    // at zero payoff participate.
    if (payoff(a, c, mu, candidate) < 0.0) return 0.0;
    return candidate;
}

double proximal_best_response(const AgentParams& a, const ContractParams& c, double mu,
                              double x_prev, double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("proximal weight gamma must be > 0");
    if (!(x_prev >= 0.0)) throw std::domain_error("x_prev must be >= 0");
    if (!(mu >= 0.0)) throw std::domain_error("price mu must be >= 0");

    const double p = a.beta + c.fee_tau + mu;
    // Stationarity of the regularized objective for x > 0:
    //   alpha/(1+x) - p - gamma*(x - x_prev) = 0
    // i.e. gamma*x^2 + (p + gamma - gamma*x_prev)*x + (p - alpha - gamma*x_prev) = 0.
    const double slope_at_zero = a.alpha - p + gamma * x_prev;
    double candidate = 0.0;
    if (slope_at_zero > 0.0) {
        const double b = p + gamma * (1.0 - x_prev);
        const double cc = p - a.alpha - gamma * x_prev;  // < 0 here
        const double disc = std::sqrt(b * b - 4.0 * gamma * cc);
        // Larger root; the -2c/(b+sqrt) form avoids cancellation for small gamma.
        candidate = (b >= 0.0) ? (-2.0 * cc) / (b + disc) : (disc - b) / (2.0 * gamma);
    }
    if (candidate <= 0.0) return 0.0;

    // Exit decision under the regularized objective: staying out scores
    // -(gamma/2) * x_prev^2, not 0.
    const double at_candidate =
        payoff(a, c, mu, candidate) - 0.5 * gamma * (candidate - x_prev) * (candidate - x_prev);
    const double at_zero = -0.5 * gamma * x_prev * x_prev;
    return at_candidate >= at_zero ? candidate : 0.0;
}

double demand_upper_bound(const AgentParams& a) {
    return std::max(0.0, a.alpha / a.beta - 1.0);
}

}  // namespace capalloc
