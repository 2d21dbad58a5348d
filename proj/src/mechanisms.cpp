#include "capalloc/mechanisms.hpp"

#include <cmath>
#include <stdexcept>

namespace capalloc {

namespace {

Allocation finish(std::vector<double> q, double unit_price, const ContractParams& c,
                  bool clearing_converged = true) {
    Allocation out;
    out.quantities = std::move(q);
    out.unit_price = unit_price;
    out.payments.reserve(out.quantities.size());
    double total = 0.0;
    for (double x : out.quantities) {
        total += x;
        out.payments.push_back(x > 0.0 ? unit_price * x + c.fee_g : 0.0);
    }
    out.capacity_violation = std::max(0.0, total - c.capacity_m);
    // Rationing lands on m only up to rounding; snap sub-epsilon overshoot.
    if (out.capacity_violation <= 1e-12 * std::max(1.0, c.capacity_m)) out.capacity_violation = 0.0;
    out.feasible = out.capacity_violation == 0.0;
    out.clearing_converged = clearing_converged;
    return out;
}

std::vector<double> demands_at(const std::vector<AgentParams>& agents, const ContractParams& c,
                               double mu) {
    std::vector<double> d(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) d[i] = best_response(agents[i], c, mu);
    return d;
}

void ration_to_capacity(std::vector<double>& d, double m) {
    double total = 0.0;
    for (double x : d) total += x;
    if (total > m && total > 0.0) {
        const double scale = m / total;
        for (double& x : d) x *= scale;
    }
}

}  // namespace

std::string mechanism_name(const MechanismKind& kind) {
    switch (kind.family) {
        case MechanismFamily::NoEnforcement: return "no_enforcement";
        case MechanismFamily::Proportional: return "proportional";
        case MechanismFamily::FlatContract: return "flat";
        case MechanismFamily::ProposedEquilibrium: return "proposed";
    }
    return "unknown";
}

Allocation allocate_no_enforcement(const std::vector<AgentParams>& agents,
                                   const ContractParams& c) {
    return finish(demands_at(agents, c, 0.0), c.fee_tau, c);
}

Allocation allocate_proportional(const std::vector<AgentParams>& agents,
                                 const ContractParams& c) {
    auto d = demands_at(agents, c, 0.0);
    ration_to_capacity(d, c.capacity_m);
    return finish(std::move(d), c.fee_tau, c);
}

Allocation allocate_flat_contract(const std::vector<AgentParams>& agents,
                                  const ContractParams& c, double flat_fee) {
    if (!(flat_fee >= 0.0) || !std::isfinite(flat_fee))
        throw std::invalid_argument("flat_fee must be >= 0 and finite");
    auto d = demands_at(agents, c, flat_fee);
    ration_to_capacity(d, c.capacity_m);
    return finish(std::move(d), c.fee_tau + flat_fee, c);
}

Allocation allocate_proposed(const std::vector<AgentParams>& agents, const ContractParams& c,
                             const AlgoConfig& cfg, std::uint64_t rng_seed) {
    ClearingSolution sol = clear_decentralized(agents, c, cfg, rng_seed);
    auto q = sol.allocations;
    // The contract never hands out more than capacity; trim the primal
    // tolerance's worth of overshoot (at most eps_p).
    ration_to_capacity(q, c.capacity_m);
    return finish(std::move(q), c.fee_tau + sol.mu_star, c, sol.converged);
}

Allocation allocate(const MechanismKind& kind, const std::vector<AgentParams>& agents,
                    const ContractParams& c, const AlgoConfig& cfg, std::uint64_t rng_seed) {
    switch (kind.family) {
        case MechanismFamily::NoEnforcement: return allocate_no_enforcement(agents, c);
        case MechanismFamily::Proportional: return allocate_proportional(agents, c);
        case MechanismFamily::FlatContract: return allocate_flat_contract(agents, c, kind.flat_fee);
        case MechanismFamily::ProposedEquilibrium:
            return allocate_proposed(agents, c, cfg, rng_seed);
    }
    throw std::invalid_argument("unknown mechanism");
}

double calibrate_flat_fee(int n, double mean_alpha, double mean_beta, const ContractParams& c) {
    if (n < 1) throw std::invalid_argument("calibrate_flat_fee: n must be >= 1");
    std::vector<AgentParams> mean_pop;
    mean_pop.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        mean_pop.emplace_back(mean_alpha, mean_beta, static_cast<std::uint32_t>(i));
    return clear_bisection(mean_pop, c, 1e-10).mu_star;
}

}  // namespace capalloc
