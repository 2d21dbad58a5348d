#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "capalloc/agent.hpp"
#include "capalloc/clearing.hpp"
#include "capalloc/experiments.hpp"
#include "capalloc/io.hpp"
#include "capalloc/mechanisms.hpp"
#include "capalloc/metrics.hpp"

namespace py = pybind11;
using namespace capalloc;

namespace {

AlgoConfig make_algo(std::optional<double> eta, double gamma, std::optional<double> tol_primal,
                     double tol_dual, int max_iters, int mc_samples, double noise_sigma,
                     double mu_init, std::optional<double> eta0, std::optional<double> exponent,
                     bool record_allocations) {
    AlgoConfig cfg;
    if (eta0 || exponent) {
        DiminishingStep ds;
        if (eta0) ds.eta0 = *eta0;
        if (exponent) ds.exponent = *exponent;
        cfg.step = ds;
    } else {
        cfg.step = ConstantStep{eta};
    }
    cfg.gamma = gamma;
    cfg.tol_primal = tol_primal;
    cfg.tol_dual = tol_dual;
    cfg.max_iters = max_iters;
    cfg.mc_samples = mc_samples;
    cfg.noise_sigma = noise_sigma;
    cfg.mu_init = mu_init;
    cfg.record_allocations = record_allocations;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_capalloc, m) {
    m.doc() = "Contract-clearing resource allocation under a shared capacity constraint";

    py::class_<AgentParams>(m, "AgentParams")
        .def(py::init<double, double, std::uint32_t>(), py::arg("alpha"), py::arg("beta"),
             py::arg("id") = 0)
        .def_readonly("alpha", &AgentParams::alpha)
        .def_readonly("beta", &AgentParams::beta)
        .def_readonly("id", &AgentParams::id)
        .def("__repr__", [](const AgentParams& a) {
            return "AgentParams(alpha=" + std::to_string(a.alpha) +
                   ", beta=" + std::to_string(a.beta) + ", id=" + std::to_string(a.id) + ")";
        });

    py::class_<ContractParams>(m, "ContractParams")
        .def(py::init<double, double, double>(), py::arg("capacity_m"), py::arg("fee_tau") = 0.0,
             py::arg("fee_g") = 0.0)
        .def_readonly("capacity_m", &ContractParams::capacity_m)
        .def_readonly("fee_tau", &ContractParams::fee_tau)
        .def_readonly("fee_g", &ContractParams::fee_g);

    py::class_<AlgoConfig>(m, "AlgoConfig")
        .def(py::init(&make_algo), py::kw_only(), py::arg("eta") = std::nullopt,
             py::arg("gamma") = 1e-6, py::arg("tol_primal") = std::nullopt,
             py::arg("tol_dual") = 1e-8, py::arg("max_iters") = 100000,
             py::arg("mc_samples") = 1, py::arg("noise_sigma") = 0.0, py::arg("mu_init") = 0.0,
             py::arg("eta0") = std::nullopt, py::arg("exponent") = std::nullopt,
             py::arg("record_allocations") = true);

    py::class_<IterateRecord>(m, "IterateRecord")
        .def_readonly("t", &IterateRecord::t)
        .def_readonly("mu", &IterateRecord::mu)
        .def_readonly("allocations", &IterateRecord::allocations)
        .def_readonly("s_hat", &IterateRecord::s_hat)
        .def_readonly("r_primal", &IterateRecord::r_primal)
        .def_readonly("r_dual", &IterateRecord::r_dual);

    py::class_<ClearingSolution>(m, "ClearingSolution")
        .def_readonly("allocations", &ClearingSolution::allocations)
        .def_readonly("mu_star", &ClearingSolution::mu_star)
        .def_readonly("converged", &ClearingSolution::converged)
        .def_readonly("iterations", &ClearingSolution::iterations)
        .def_readonly("trace", &ClearingSolution::trace)
        .def_readonly("slack", &ClearingSolution::slack)
        .def_readonly("demand_gap", &ClearingSolution::demand_gap);

    py::class_<RateDiagnostics>(m, "RateDiagnostics")
        .def_readonly("contraction_kappa", &RateDiagnostics::contraction_kappa)
        .def_readonly("fejer_violations", &RateDiagnostics::fejer_violations)
        .def_readonly("ergodic_residual_curve", &RateDiagnostics::ergodic_residual_curve)
        .def_readonly("lipschitz_L", &RateDiagnostics::lipschitz_L)
        .def_readonly("strong_mono_alpha", &RateDiagnostics::strong_mono_alpha);

    py::class_<Allocation>(m, "Allocation")
        .def_readonly("quantities", &Allocation::quantities)
        .def_readonly("unit_price", &Allocation::unit_price)
        .def_readonly("payments", &Allocation::payments)
        .def_readonly("feasible", &Allocation::feasible)
        .def_readonly("capacity_violation", &Allocation::capacity_violation);

    py::class_<MechanismKind>(m, "MechanismKind")
        .def_static("no_enforcement", &MechanismKind::no_enforcement)
        .def_static("proportional", &MechanismKind::proportional)
        .def_static("flat_contract", &MechanismKind::flat_contract, py::arg("flat_fee"))
        .def_static("proposed", &MechanismKind::proposed)
        .def("__repr__", [](const MechanismKind& k) { return mechanism_name(k); });

    py::class_<MetricsReport>(m, "MetricsReport")
        .def_readonly("efficiency", &MetricsReport::efficiency)
        .def_readonly("gini", &MetricsReport::gini)
        .def_readonly("fairness_one_minus_gini", &MetricsReport::fairness_one_minus_gini)
        .def_readonly("participation", &MetricsReport::participation)
        .def_readonly("avg_cost", &MetricsReport::avg_cost);

    // Agent primitives
    m.def("valuation", &valuation, py::arg("agent"), py::arg("x"));
    m.def("cost", &cost, py::arg("agent"), py::arg("x"));
    m.def("payoff", &payoff, py::arg("agent"), py::arg("contract"), py::arg("mu"), py::arg("x"));
    m.def("best_response", &best_response, py::arg("agent"), py::arg("contract"), py::arg("mu"));
    m.def("proximal_best_response", &proximal_best_response, py::arg("agent"),
          py::arg("contract"), py::arg("mu"), py::arg("x_prev"), py::arg("gamma"));
    m.def("demand_upper_bound", &demand_upper_bound, py::arg("agent"));

    // Clearing
    m.def("aggregate_demand", &aggregate_demand, py::arg("agents"), py::arg("contract"),
          py::arg("mu"));
    m.def("lipschitz_bound", &lipschitz_bound, py::arg("agents"), py::arg("contract"));
    m.def("dual_update", &dual_update, py::arg("mu"), py::arg("eta"), py::arg("s_hat"),
          py::arg("m"));
    m.def("clear_bisection", &clear_bisection, py::arg("agents"), py::arg("contract"),
          py::arg("tol") = 1e-10);
    m.def("clear_decentralized", &clear_decentralized, py::arg("agents"), py::arg("contract"),
          py::arg("config") = AlgoConfig{}, py::arg("seed") = 0);
    m.def("clear_stochastic", &clear_stochastic, py::arg("agents"), py::arg("contract"),
          py::arg("config"), py::arg("seed") = 0);
    m.def("diagnose_rates", &diagnose_rates, py::arg("trace"), py::arg("mu_star_oracle"),
          py::arg("agents"), py::arg("contract"));

    // Mechanisms
    m.def("allocate", &allocate, py::arg("kind"), py::arg("agents"), py::arg("contract"),
          py::arg("config") = AlgoConfig{}, py::arg("seed") = 0);
    m.def("calibrate_flat_fee", &calibrate_flat_fee, py::arg("n"), py::arg("mean_alpha"),
          py::arg("mean_beta"), py::arg("contract"));

    // Metrics
    m.def("efficiency", &efficiency, py::arg("x"), py::arg("agents"), py::arg("contract"),
          py::arg("eps_part") = kDefaultEpsPart);
    m.def("gini", &gini, py::arg("x"));
    m.def("participation_rate", &participation_rate, py::arg("x"),
          py::arg("eps_part") = kDefaultEpsPart);
    m.def("avg_cost", &avg_cost, py::arg("x"), py::arg("agents"), py::arg("contract"),
          py::arg("unit_price"), py::arg("eps_part") = kDefaultEpsPart);
    m.def("resilience", &resilience, py::arg("eff_pre"), py::arg("eff_post"));
    m.def(
        "price_of_fairness",
        [](const std::vector<AgentParams>& agents, const ContractParams& c,
           const std::vector<double>& fair, double eps) {
            return price_of_fairness(agents, c, fair, eps);
        },
        py::arg("agents"), py::arg("contract"), py::arg("fair_allocation"),
        py::arg("eps_part") = kDefaultEpsPart);
    m.def("dynamic_regret", &dynamic_regret, py::arg("realized"), py::arg("agents_per_round"),
          py::arg("contracts_per_round"), py::arg("eps_part") = kDefaultEpsPart);

    // Dataset ingestion
    py::class_<IngestReport>(m, "IngestReport")
        .def_readonly("records", &IngestReport::records)
        .def_readonly("users", &IngestReport::users)
        .def_readonly("malformed", &IngestReport::malformed);
    m.def(
        "load_movielens",
        [](const std::string& path, std::uint64_t seed, bool strict) {
            MovieLensPopulation pop = load_movielens(path, seed, strict);
            return py::make_tuple(pop.agents, pop.report);
        },
        py::arg("path"), py::arg("seed") = 0, py::arg("strict") = false);

#ifdef CAPALLOC_VERSION_INFO
    m.attr("__version__") = CAPALLOC_VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
