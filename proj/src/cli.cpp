#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capalloc/io.hpp"
#include "capalloc/metrics.hpp"
#include "capalloc/rng.hpp"

namespace capalloc {

namespace {

constexpr std::uint64_t kCliClearingSalt = 0x636c6561722d636cULL;
constexpr std::uint64_t kMovielensSalt = 0x6d6f76696c656e73ULL;

struct CommonOpts {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::string out_path;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Scenario config file");
    cmd->add_option("--seed", opts.seed, "Override the master seed");
    cmd->add_option("--out", opts.out_path, "Write the result table to this path");
    cmd->add_option("--format", opts.format, "Output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ScenarioConfig load_config(const CommonOpts& opts) {
    ScenarioConfig cfg =
        opts.config_path.empty() ? ScenarioConfig{} : parse_scenario_config(opts.config_path);
    if (opts.seed) cfg.master_seed = static_cast<std::uint64_t>(*opts.seed);
    return cfg;
}

// Sweep-style commands default to 50 replications (movielens to 10) unless
// the config file pins experiment.replications itself.
void apply_replication_default(ScenarioConfig& cfg, int fallback) {
    if (!cfg.has_explicit("experiment.replications")) cfg.replications = fallback;
}

void disable_trace_snapshots(ScenarioConfig& cfg) {
    if (!cfg.has_explicit("algo.record_allocations")) cfg.algo.record_allocations = false;
}

void stamp(ResultTable& table, const ScenarioConfig& cfg, const std::string& command) {
    table.add_metadata("artifact_version", kArtifactVersion);
    table.add_metadata("command", command);
    table.add_metadata("config_digest", config_digest(cfg));
    table.add_metadata("master_seed", std::to_string(cfg.master_seed));
    table.add_metadata("timestamp", timestamp_utc());
}

void emit(const ResultTable& table, const CommonOpts& opts) {
    const OutputFormat fmt = parse_format(opts.format);
    if (opts.out_path.empty()) {
        std::cout << render_results(table, fmt);
        return;
    }
    std::filesystem::path target(opts.out_path);
    if (target.is_relative()) {
        if (const char* dir = std::getenv("CAPALLOC_OUT_DIR")) target = std::filesystem::path(dir) / target;
    }
    write_results(table, target.string(), fmt);
    std::cout << "wrote " << target.string() << "\n";
}

std::vector<Cell> stat_cells(const MetricStat& s) {
    return {Cell{s.mean}, Cell{s.stddev}};
}

void append_stats(std::vector<Cell>& row, const SweepRow& r) {
    for (const auto& st : {r.eff, r.cost, r.gini_stat, r.fairness, r.participation})
        for (auto& cell : stat_cells(st)) row.push_back(cell);
    row.push_back(Cell{r.feasible_rate});
    row.push_back(Cell{r.violation_rate});
    row.push_back(Cell{static_cast<std::int64_t>(r.nonconverged)});
    row.push_back(Cell{static_cast<std::int64_t>(r.replications)});
}

const std::vector<std::string> kStatColumns = {
    "eff_mean",  "eff_std",  "cost_mean", "cost_std",      "gini_mean",
    "gini_std",  "fairness_mean", "fairness_std", "participation_mean", "participation_std",
    "feasible_rate", "violation_rate", "nonconverged", "replications"};

int cmd_clear(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    const auto pop = sample_population(cfg, 0);
    const ContractParams c = cfg.contract();

    const ClearingSolution oracle = clear_bisection(pop, c, 1e-10);
    const ClearingSolution dec =
        clear_decentralized(pop, c, cfg.algo, substream_seed(cfg.master_seed ^ kCliClearingSalt, 0));
    const RateDiagnostics diag = diagnose_rates(dec.trace, oracle.mu_star, pop, c);

    auto vec = [](const std::vector<double>& v) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << format_sig6(v[i]);
        os << ")";
        return os.str();
    };

    std::cout << "instance: n=" << pop.size() << " m=" << format_sig6(c.capacity_m)
              << " tau=" << format_sig6(c.fee_tau) << " g=" << format_sig6(c.fee_g) << "\n";
    std::cout << "bisection:      mu* = " << format_sig6(oracle.mu_star)
              << "  allocations = " << vec(oracle.allocations)
              << "  slack = " << format_sig6(oracle.slack)
              << "  gap = " << format_sig6(oracle.demand_gap) << "\n";
    std::cout << "decentralized:  mu* = " << format_sig6(dec.mu_star)
              << "  allocations = " << vec(dec.allocations) << "\n";
    std::cout << "                converged = " << (dec.converged ? "yes" : "no")
              << "  iterations = " << dec.iterations << "\n";
    std::cout << "diagnostics:    kappa = "
              << (diag.contraction_kappa ? format_sig6(*diag.contraction_kappa)
                                         : std::string("n/a"))
              << "  fejer_violations = " << diag.fejer_violations
              << "  L = " << format_sig6(diag.lipschitz_L)
              << "  strong_mono = " << format_sig6(diag.strong_mono_alpha) << "\n";

    // Price of fairness against the egalitarian split; the participant-subset
    // search behind it is only worth running at small n.
    if (pop.size() <= 50) {
        const std::vector<double> equal_split(pop.size(), c.capacity_m / static_cast<double>(pop.size()));
        const auto pof = price_of_fairness(pop, c, equal_split, cfg.eps_part);
        std::cout << "price of fairness (equal split) = "
                  << (pof ? format_sig6(*pof) : std::string("undefined")) << "\n";
    }

    if (!opts.out_path.empty()) {
        ResultTable table;
        table.columns = {"agent", "alpha", "beta", "allocation", "payment"};
        for (std::size_t i = 0; i < pop.size(); ++i) {
            const double x = dec.allocations[i];
            table.push_row({Cell{static_cast<std::int64_t>(pop[i].id)}, Cell{pop[i].alpha},
                            Cell{pop[i].beta}, Cell{x},
                            Cell{x > 0.0 ? (c.fee_tau + dec.mu_star) * x + c.fee_g : 0.0}});
        }
        stamp(table, cfg, "clear");
        table.add_metadata("mu_star", format_sig6(dec.mu_star));
        emit(table, opts);
    }
    return 0;
}

int cmd_compare(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    apply_replication_default(cfg, 50);
    disable_trace_snapshots(cfg);

    ResultTable table;
    table.columns = {"mechanism"};
    table.columns.insert(table.columns.end(), kStatColumns.begin(), kStatColumns.end());
    for (const auto& mech : cfg.mechanism_set) {
        const SweepRow row = run_replications(cfg, mech);
        std::vector<Cell> cells{Cell{row.mechanism}};
        append_stats(cells, row);
        table.push_row(std::move(cells));
    }
    stamp(table, cfg, "compare");
    emit(table, opts);
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    apply_replication_default(cfg, 50);
    disable_trace_snapshots(cfg);

    SweepResult result = fee_sweep(cfg);
    result.config_digest = config_digest(cfg);
    ResultTable table;
    table.columns = {"tau", "mechanism"};
    table.columns.insert(table.columns.end(), kStatColumns.begin(), kStatColumns.end());
    for (const auto& row : result.rows) {
        std::vector<Cell> cells{Cell{row.point.at("tau")}, Cell{row.mechanism}};
        append_stats(cells, row);
        table.push_row(std::move(cells));
    }
    stamp(table, cfg, "sweep");
    emit(table, opts);
    return 0;
}

int cmd_grid(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    apply_replication_default(cfg, 50);
    disable_trace_snapshots(cfg);

    SweepResult result = sensitivity_grid(cfg);
    result.config_digest = config_digest(cfg);
    ResultTable table;
    table.columns = {"tau", "g", "mechanism"};
    table.columns.insert(table.columns.end(), kStatColumns.begin(), kStatColumns.end());
    table.columns.push_back("deff_dtau");
    for (const auto& row : result.rows) {
        std::vector<Cell> cells{Cell{row.point.at("tau")}, Cell{row.point.at("g")},
                                Cell{row.mechanism}};
        append_stats(cells, row);
        const auto it = row.extra.find("deff_dtau");
        cells.push_back(it == row.extra.end() ? Cell{std::string("edge")} : Cell{it->second});
        table.push_row(std::move(cells));
    }
    stamp(table, cfg, "grid");
    emit(table, opts);
    return 0;
}

int cmd_shock(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    disable_trace_snapshots(cfg);
    const FeeSchedule schedule =
        FeeSchedule::step_tau(cfg.horizon, cfg.tau, cfg.tau_post, cfg.shock_time, cfg.g);
    const ShockResult result = shock_run(cfg, schedule, 0);

    ResultTable table;
    table.columns = {"t", "tau", "mu", "aggregate_demand", "kkt_residual",
                     "efficiency", "gini", "participation"};
    for (const auto& r : result.rounds) {
        table.push_row({Cell{static_cast<std::int64_t>(r.t)}, Cell{r.tau}, Cell{r.mu}, Cell{r.s},
                        Cell{r.kkt_residual}, Cell{r.metrics.efficiency}, Cell{r.metrics.gini},
                        Cell{r.metrics.participation}});
    }
    stamp(table, cfg, "shock");
    table.add_metadata("resilience_R", result.summary.resilience_r
                                           ? format_sig6(*result.summary.resilience_r)
                                           : "undefined");
    table.add_metadata("reconvergence_time",
                       result.summary.reconvergence_time
                           ? std::to_string(*result.summary.reconvergence_time)
                           : "never");
    table.add_metadata("mu_post_oracle", format_sig6(result.summary.mu_post_oracle));
    table.add_metadata("mu_final", format_sig6(result.summary.mu_final));
    emit(table, opts);
    return 0;
}

int cmd_regret(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    disable_trace_snapshots(cfg);
    // Per-round clearing comparators are welfare-optimal only without the
    // fixed execution fee; regret against a suboptimal comparator can go
    // negative, so the experiment runs at g = 0 unless the config insists.
    if (!cfg.has_explicit("contract.g")) cfg.g = 0.0;
    const RegretResult result = regret_experiment(cfg, 0);

    ResultTable table;
    table.columns = {"T", "cumulative_regret"};
    for (const auto& pt : result.curve)
        table.push_row({Cell{static_cast<std::int64_t>(pt.t)}, Cell{pt.cumulative}});
    stamp(table, cfg, "regret");
    table.add_metadata("fitted_slope",
                       result.fitted_slope ? format_sig6(*result.fitted_slope) : "n/a");
    table.add_metadata("final_cumulative", format_sig6(result.final_cumulative));
    emit(table, opts);
    return 0;
}

int cmd_statics(const CommonOpts& opts) {
    ScenarioConfig cfg = load_config(opts);
    const auto pop = sample_population(cfg, 0);
    const auto series = capacity_statics(pop, cfg.contract(), cfg.m_grid);

    ResultTable table;
    table.columns = {"m", "mu_star"};
    for (const auto& [m, mu] : series) table.push_row({Cell{m}, Cell{mu}});
    stamp(table, cfg, "statics");
    emit(table, opts);
    return 0;
}

int cmd_movielens(const CommonOpts& opts, const std::string& data_flag, bool strict) {
    ScenarioConfig cfg = load_config(opts);
    apply_replication_default(cfg, 10);
    disable_trace_snapshots(cfg);

    const std::string data_path = !data_flag.empty() ? data_flag : cfg.movielens_path;
    if (data_path.empty())
        throw std::invalid_argument("movielens: no dataset path (use --data or [movielens] data)");

    // One ingest up front for the report; per-replication ingests re-draw the
    // cost coefficients from replication-specific seeds.
    const MovieLensPopulation probe = load_movielens(data_path, cfg.master_seed, strict);
    const std::size_t n_agents = probe.agents.size();
    if (n_agents == 0) throw std::runtime_error("movielens: no valid records in " + data_path);
    const double m = cfg.movielens_capacity_per_agent * static_cast<double>(n_agents);
    const ContractParams c{m, cfg.tau, cfg.g};

    const std::vector<MechanismKind> mechs = {
        MechanismKind::no_enforcement(), MechanismKind::proportional(),
        MechanismKind::flat_contract(cfg.flat_fee.value_or(0.0)), MechanismKind::proposed()};

    struct Acc {
        std::vector<double> eff, releff, cost, gini_v, part;
        int feasible = 0;
    };
    std::vector<Acc> acc(mechs.size());

    for (int rep = 0; rep < cfg.replications; ++rep) {
        const auto popn =
            load_movielens(data_path,
                           substream_seed(cfg.master_seed ^ kMovielensSalt,
                                          static_cast<std::uint64_t>(rep)),
                           strict)
                .agents;
        double flat = cfg.flat_fee.value_or(0.0);
        if (!cfg.flat_fee) {
            double ma = 0.0, mb = 0.0;
            for (const auto& a : popn) {
                ma += a.alpha;
                mb += a.beta;
            }
            flat = calibrate_flat_fee(static_cast<int>(popn.size()),
                                      ma / static_cast<double>(popn.size()),
                                      mb / static_cast<double>(popn.size()), c);
        }
        double eff_baseline = 0.0;
        for (std::size_t mi = 0; mi < mechs.size(); ++mi) {
            MechanismKind mech = mechs[mi];
            if (mech.family == MechanismFamily::FlatContract) mech.flat_fee = flat;
            const Allocation alloc =
                allocate(mech, popn, c, cfg.algo,
                         substream_seed(cfg.master_seed ^ kCliClearingSalt,
                                        static_cast<std::uint64_t>(rep) * 8 + mi));
            const MetricsReport rep_metrics =
                basic_report(alloc.quantities, popn, c, alloc.unit_price, cfg.eps_part);
            if (mech.family == MechanismFamily::NoEnforcement)
                eff_baseline = rep_metrics.efficiency;
            auto& a = acc[mi];
            a.eff.push_back(rep_metrics.efficiency);
            a.releff.push_back(eff_baseline != 0.0 ? rep_metrics.efficiency / eff_baseline : 0.0);
            a.cost.push_back(rep_metrics.avg_cost);
            a.gini_v.push_back(rep_metrics.gini);
            a.part.push_back(rep_metrics.participation);
            a.feasible += alloc.feasible ? 1 : 0;
        }
    }

    auto mean_std = [](const std::vector<double>& v) {
        double mn = 0.0;
        for (double z : v) mn += z;
        mn /= static_cast<double>(v.size());
        double var = 0.0;
        for (double z : v) var += (z - mn) * (z - mn);
        return std::pair<double, double>{mn, std::sqrt(var / static_cast<double>(v.size()))};
    };

    ResultTable table;
    table.columns = {"mechanism", "eff_mean", "eff_std", "releff_mean", "releff_std",
                     "cost_mean", "cost_std", "gini_mean", "gini_std",
                     "participation_mean", "feasible_rate"};
    for (std::size_t mi = 0; mi < mechs.size(); ++mi) {
        const auto [em, es] = mean_std(acc[mi].eff);
        const auto [rm, rs] = mean_std(acc[mi].releff);
        const auto [cm, cs] = mean_std(acc[mi].cost);
        const auto [gm, gs] = mean_std(acc[mi].gini_v);
        const auto [pm, ps] = mean_std(acc[mi].part);
        table.push_row({Cell{mechanism_name(mechs[mi])}, Cell{em}, Cell{es}, Cell{rm}, Cell{rs},
                        Cell{cm}, Cell{cs}, Cell{gm}, Cell{gs}, Cell{pm},
                        Cell{static_cast<double>(acc[mi].feasible) /
                             static_cast<double>(cfg.replications)}});
    }
    stamp(table, cfg, "movielens");
    table.add_metadata("users", std::to_string(probe.report.users));
    table.add_metadata("records", std::to_string(probe.report.records));
    table.add_metadata("malformed", std::to_string(probe.report.malformed));
    table.add_metadata("capacity_m", format_sig6(m));
    emit(table, opts);
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& argv) {
    CLI::App app{"Contract-clearing resource allocation: solvers, mechanism benchmarks, experiments"};
    app.require_subcommand(1);

    CommonOpts clear_o, compare_o, sweep_o, grid_o, shock_o, regret_o, statics_o, ml_o;
    std::string ml_data;
    bool ml_strict = false;

    auto* c_clear = app.add_subcommand("clear", "Solve one instance with both solvers");
    add_common(c_clear, clear_o);
    auto* c_compare = app.add_subcommand("compare", "Benchmark the four mechanisms");
    add_common(c_compare, compare_o);
    auto* c_sweep = app.add_subcommand("sweep", "Metrics across the transaction-fee grid");
    add_common(c_sweep, sweep_o);
    auto* c_grid = app.add_subcommand("grid", "Joint (tau, g) sensitivity grid");
    add_common(c_grid, grid_o);
    auto* c_shock = app.add_subcommand("shock", "Fee-shock resilience run");
    add_common(c_shock, shock_o);
    auto* c_regret = app.add_subcommand("regret", "Dynamic regret under alpha drift");
    add_common(c_regret, regret_o);
    auto* c_statics = app.add_subcommand("statics", "Clearing price across a capacity grid");
    add_common(c_statics, statics_o);
    auto* c_ml = app.add_subcommand("movielens", "Mechanism comparison on MovieLens-100K");
    add_common(c_ml, ml_o);
    c_ml->add_option("--data", ml_data, "Path to u.data");
    c_ml->add_flag("--strict", ml_strict, "Abort on malformed records instead of skipping");

    std::vector<std::string> args(argv);
    std::reverse(args.begin(), args.end());  // CLI11 wants reversed argument order
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (c_clear->parsed()) return cmd_clear(clear_o);
        if (c_compare->parsed()) return cmd_compare(compare_o);
        if (c_sweep->parsed()) return cmd_sweep(sweep_o);
        if (c_grid->parsed()) return cmd_grid(grid_o);
        if (c_shock->parsed()) return cmd_shock(shock_o);
        if (c_regret->parsed()) return cmd_regret(regret_o);
        if (c_statics->parsed()) return cmd_statics(statics_o);
        if (c_ml->parsed()) return cmd_movielens(ml_o, ml_data, ml_strict);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace capalloc
