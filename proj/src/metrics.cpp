#include "capalloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "capalloc/clearing.hpp"

namespace capalloc {

double efficiency(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                  const ContractParams& c, double eps_part) {
    if (x.size() != agents.size())
        throw std::invalid_argument("efficiency: allocation/population length mismatch");
    double surplus = 0.0, total = 0.0;
    std::size_t participants = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= 0.0)) throw std::domain_error("efficiency: allocations must be >= 0");
        surplus += valuation(agents[i], x[i]) - cost(agents[i], x[i]);
        total += x[i];
        if (x[i] > eps_part) ++participants;
    }
    return surplus - c.fee_tau * total - c.fee_g * static_cast<double>(participants);
}

double gini(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("gini: empty allocation vector");
    const std::size_t n = x.size();
    double total = 0.0;
    for (double v : x) {
        if (!(v >= 0.0)) throw std::domain_error("gini: allocations must be >= 0");
        total += v;
    }
    if (total == 0.0) return 0.0;  // equality of nothing

    // Sorted form of (1/(2n^2 xbar)) * sum_ij |x_i - x_j|.
    std::vector<double> s(x);
    std::sort(s.begin(), s.end());
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        weighted += (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0) * s[i];
    return weighted / (static_cast<double>(n) * total);
}

double participation_rate(const std::vector<double>& x, double eps_part) {
    if (x.empty()) throw std::invalid_argument("participation_rate: empty allocation vector");
    std::size_t k = 0;
    for (double v : x)
        if (v > eps_part) ++k;
    return static_cast<double>(k) / static_cast<double>(x.size());
}

double avg_cost(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                const ContractParams& c, double unit_price, double eps_part) {
    if (!(unit_price >= 0.0)) throw std::invalid_argument("avg_cost: unit_price must be >= 0");
    if (x.size() != agents.size())
        throw std::invalid_argument("avg_cost: allocation/population length mismatch");
    double paid = 0.0;
    std::size_t k = 0;
    for (double v : x) {
        if (v > eps_part) {
            paid += unit_price * v + c.fee_g;
            ++k;
        }
    }
    return k == 0 ? 0.0 : paid / static_cast<double>(k);
}

namespace {

struct SubsetValue {
    double value;
    std::vector<double> allocation;  // full-length
};

// Welfare-maximal allocation for a fixed participant set: the g fees are
// sunk per member, so the interior problem is the g=0 clearing program.
SubsetValue subset_value(const std::vector<AgentParams>& agents, const ContractParams& c,
                         const std::vector<std::size_t>& members, double eps_part) {
    SubsetValue out;
    out.allocation.assign(agents.size(), 0.0);
    if (members.empty()) {
        out.value = 0.0;
        return out;
    }
    std::vector<AgentParams> sub;
    sub.reserve(members.size());
    for (std::size_t idx : members) sub.push_back(agents[idx]);
    const ContractParams inner{c.capacity_m, c.fee_tau, 0.0};
    ClearingSolution sol = clear_bisection(sub, inner, 1e-12);
    for (std::size_t j = 0; j < members.size(); ++j)
        out.allocation[members[j]] = sol.allocations[j];
    out.value = efficiency(out.allocation, agents, c, eps_part);
    return out;
}

}  // namespace

MaxEfficiencyResult max_efficiency(const std::vector<AgentParams>& agents,
                                   const ContractParams& c, double eps_part) {
    MaxEfficiencyResult out;
    const std::size_t n = agents.size();
    if (n == 0) {
        out.value = 0.0;
        return out;
    }

    if (c.fee_g == 0.0) {
        const ContractParams inner{c.capacity_m, c.fee_tau, 0.0};
        ClearingSolution sol = clear_bisection(agents, inner, 1e-12);
        out.allocation = sol.allocations;
        out.value = efficiency(out.allocation, agents, c, eps_part);
        return out;
    }

    if (n <= 15) {
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> best_alloc(n, 0.0);
        std::vector<std::size_t> members;
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            members.clear();
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1u << i)) members.push_back(i);
            SubsetValue sv = subset_value(agents, c, members, eps_part);
            if (sv.value > best) {
                best = sv.value;
                best_alloc = std::move(sv.allocation);
            }
        }
        out.value = best;
        out.allocation = std::move(best_alloc);
        return out;
    }

    // Greedy drop from the full set; approximate above 15 agents.
    std::vector<std::size_t> members(n);
    for (std::size_t i = 0; i < n; ++i) members[i] = i;
    SubsetValue current = subset_value(agents, c, members, eps_part);
    bool improved = true;
    while (improved && !members.empty()) {
        improved = false;
        std::size_t drop_pos = 0;
        SubsetValue best_next = current;
        for (std::size_t pos = 0; pos < members.size(); ++pos) {
            std::vector<std::size_t> trial = members;
            trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(pos));
            SubsetValue sv = subset_value(agents, c, trial, eps_part);
            if (sv.value > best_next.value) {
                best_next = std::move(sv);
                drop_pos = pos;
                improved = true;
            }
        }
        if (improved) {
            members.erase(members.begin() + static_cast<std::ptrdiff_t>(drop_pos));
            current = std::move(best_next);
        }
    }
    out.value = current.value;
    out.allocation = std::move(current.allocation);
    out.exact = false;
    return out;
}

std::optional<double> price_of_fairness(const std::vector<AgentParams>& agents,
                                        const ContractParams& c,
                                        const std::vector<double>& fair_allocation,
                                        double eps_part) {
    double total = 0.0;
    for (double v : fair_allocation) {
        if (!(v >= 0.0)) throw std::invalid_argument("price_of_fairness: negative allocation");
        total += v;
    }
    if (total > c.capacity_m * (1.0 + 1e-9))
        throw std::invalid_argument("price_of_fairness: fair allocation exceeds capacity");

    const double denom = efficiency(fair_allocation, agents, c, eps_part);
    if (denom <= 0.0) return std::nullopt;
    return max_efficiency(agents, c, eps_part).value / denom;
}

std::optional<double> resilience(double eff_pre, double eff_post) {
    if (eff_pre <= 0.0) return std::nullopt;
    return eff_post / eff_pre;
}

double dynamic_regret(const std::vector<std::vector<double>>& realized,
                      const std::vector<std::vector<AgentParams>>& agents_per_round,
                      const std::vector<ContractParams>& c_per_round, double eps_part) {
    if (realized.size() != agents_per_round.size() || realized.size() != c_per_round.size())
        throw std::invalid_argument("dynamic_regret: misaligned sequences");
    double total = 0.0;
    for (std::size_t t = 0; t < realized.size(); ++t) {
        ClearingSolution comp = clear_bisection(agents_per_round[t], c_per_round[t], 1e-12);
        total += efficiency(comp.allocations, agents_per_round[t], c_per_round[t], eps_part) -
                 efficiency(realized[t], agents_per_round[t], c_per_round[t], eps_part);
    }
    return total;
}

MetricsReport basic_report(const std::vector<double>& x, const std::vector<AgentParams>& agents,
                           const ContractParams& c, double unit_price, double eps_part) {
    MetricsReport r;
    r.efficiency = efficiency(x, agents, c, eps_part);
    r.gini = gini(x);
    r.fairness_one_minus_gini = 1.0 - r.gini;
    r.participation = participation_rate(x, eps_part);
    r.avg_cost = avg_cost(x, agents, c, unit_price, eps_part);
    return r;
}

}  // namespace capalloc
