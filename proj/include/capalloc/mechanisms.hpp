#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capalloc/agent.hpp"
#include "capalloc/clearing.hpp"

namespace capalloc {

struct Allocation {
    std::vector<double> quantities;
    double unit_price = 0.0;        // tau + mu (or tau + flat fee)
    std::vector<double> payments;   // unit_price * x_i + g * 1{x_i > 0}
    bool feasible = true;           // sum(x) <= m
    double capacity_violation = 0.0;
    bool clearing_converged = true;  // false when the underlying solver exhausted iterations
};

enum class MechanismFamily { NoEnforcement, Proportional, FlatContract, ProposedEquilibrium };

struct MechanismKind {
    MechanismFamily family = MechanismFamily::ProposedEquilibrium;
    double flat_fee = 0.0;  // only meaningful for FlatContract

    static MechanismKind no_enforcement() { return {MechanismFamily::NoEnforcement, 0.0}; }
    static MechanismKind proportional() { return {MechanismFamily::Proportional, 0.0}; }
    static MechanismKind flat_contract(double fee) { return {MechanismFamily::FlatContract, fee}; }
    static MechanismKind proposed() { return {MechanismFamily::ProposedEquilibrium, 0.0}; }
};

std::string mechanism_name(const MechanismKind& kind);

// Everyone takes their unconstrained best response at mu = 0; the capacity
// breach, if any, is recorded rather than corrected.
Allocation allocate_no_enforcement(const std::vector<AgentParams>& agents,
                                   const ContractParams& c);

// Share-of-demand rationing: demands at mu = 0 scaled by m / sum(d) when the
// total exceeds capacity.
Allocation allocate_proportional(const std::vector<AgentParams>& agents,
                                 const ContractParams& c);

// Fixed administrative price: agents best-respond to mu = flat_fee (no
// market clearing), with proportional rationing on top if demand still
// exceeds capacity.
Allocation allocate_flat_contract(const std::vector<AgentParams>& agents,
                                  const ContractParams& c, double flat_fee);

// Equilibrium contract: delegates to clear_decentralized; always feasible.
Allocation allocate_proposed(const std::vector<AgentParams>& agents, const ContractParams& c,
                             const AlgoConfig& cfg, std::uint64_t rng_seed);

Allocation allocate(const MechanismKind& kind, const std::vector<AgentParams>& agents,
                    const ContractParams& c, const AlgoConfig& cfg, std::uint64_t rng_seed);

// Set-and-forget administrative fee for FlatContract: the clearing price of
// the population built from the mean parameters of the configured ranges.
double calibrate_flat_fee(int n, double mean_alpha, double mean_beta, const ContractParams& c);

}  // namespace capalloc
