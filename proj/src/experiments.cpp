#include "capalloc/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "capalloc/rng.hpp"

namespace capalloc {

namespace {

constexpr std::uint64_t kPopulationSalt = 0x706f70756c617465ULL;
constexpr std::uint64_t kClearingSalt = 0x636c656172696e67ULL;

struct RepOutcome {
    MetricsReport metrics;
    bool feasible = true;
    bool violated = false;
    bool converged = true;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double z : v) s += z;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

MetricStat stat_of(const std::vector<double>& v) {
    MetricStat st;
    st.mean = mean_of(v);
    double acc = 0.0;
    for (double z : v) acc += (z - st.mean) * (z - st.mean);
    st.stddev = v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.size()));
    return st;
}

template <typename Fn>
void parallel_for(int count, Fn&& fn) {
    const int workers = std::min(replication_threads(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

MechanismKind resolve_flat_fee(const ScenarioConfig& cfg, MechanismKind kind) {
    if (kind.family == MechanismFamily::FlatContract) {
        if (cfg.flat_fee.has_value()) {
            kind.flat_fee = *cfg.flat_fee;
        } else if (kind.flat_fee == 0.0) {
            kind.flat_fee = calibrate_flat_fee(cfg.n, cfg.alpha_dist.mean(), cfg.beta_dist.mean(),
                                               cfg.contract());
        }
    }
    return kind;
}

// Complementarity-aware clearing residual: excess demand when the price is
// pinned at zero, |S - m| otherwise.
double kkt_residual(double mu, double mu_next, double s, double m) {
    if (mu == 0.0 && mu_next == 0.0) return std::max(0.0, s - m);
    return std::abs(s - m);
}

}  // namespace

int replication_threads() {
    if (const char* env = std::getenv("CAPALLOC_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return std::min(v, 64);
    }
    return 1;
}

FeeSchedule FeeSchedule::constant(int horizon, double tau, double g) {
    FeeSchedule fs;
    fs.horizon = horizon;
    fs.tau_path.assign(static_cast<std::size_t>(horizon), tau);
    fs.g_path.assign(static_cast<std::size_t>(horizon), g);
    return fs;
}

FeeSchedule FeeSchedule::step_tau(int horizon, double tau_pre, double tau_post, int t0, double g) {
    FeeSchedule fs = constant(horizon, tau_pre, g);
    fs.shock_time = t0;
    for (int t = t0; t < horizon; ++t) fs.tau_path[static_cast<std::size_t>(t)] = tau_post;
    return fs;
}

void FeeSchedule::validate() const {
    if (horizon < 1) throw std::invalid_argument("FeeSchedule: horizon must be >= 1");
    if (tau_path.size() != static_cast<std::size_t>(horizon) ||
        g_path.size() != static_cast<std::size_t>(horizon))
        throw std::invalid_argument("FeeSchedule: fee paths must cover every round in [0, T)");
    for (double v : tau_path)
        if (!(v >= 0.0)) throw std::invalid_argument("FeeSchedule: tau must be >= 0");
    for (double v : g_path)
        if (!(v >= 0.0)) throw std::invalid_argument("FeeSchedule: g must be >= 0");
    if (shock_time && (*shock_time < 0 || *shock_time >= horizon))
        throw std::invalid_argument("FeeSchedule: shock_time outside horizon");
}

std::vector<AgentParams> sample_population(const ScenarioConfig& cfg,
                                           std::uint64_t replication_index) {
    if (cfg.n < 1) throw std::invalid_argument("sample_population: n must be >= 1");
    if (cfg.alpha_dist.lo > cfg.alpha_dist.hi || cfg.beta_dist.lo > cfg.beta_dist.hi)
        throw std::invalid_argument("sample_population: degenerate distribution bounds (lo > hi)");

    Rng rng(substream_seed(cfg.master_seed ^ kPopulationSalt, replication_index));
    std::vector<AgentParams> pop;
    pop.reserve(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        const double a = rng.uniform(cfg.alpha_dist.lo, cfg.alpha_dist.hi);
        const double b = rng.uniform(cfg.beta_dist.lo, cfg.beta_dist.hi);
        pop.emplace_back(a, b, static_cast<std::uint32_t>(i));
    }
    return pop;
}

SweepRow run_replications(const ScenarioConfig& cfg, const MechanismKind& mechanism) {
    const int R = cfg.replications;
    if (R < 1) throw std::invalid_argument("run_replications: replications must be >= 1");
    const MechanismKind mech = resolve_flat_fee(cfg, mechanism);
    const ContractParams c = cfg.contract();

    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(R));
    parallel_for(R, [&](int rep) {
        const auto pop = sample_population(cfg, static_cast<std::uint64_t>(rep));
        const Allocation alloc = allocate(mech, pop, c, cfg.algo,
                                          substream_seed(cfg.master_seed ^ kClearingSalt,
                                                         static_cast<std::uint64_t>(rep)));
        RepOutcome& out = outcomes[static_cast<std::size_t>(rep)];
        out.metrics = basic_report(alloc.quantities, pop, c, alloc.unit_price, cfg.eps_part);
        out.feasible = alloc.feasible;
        out.violated = alloc.capacity_violation > 0.0;
        out.converged = alloc.clearing_converged;
    });

    std::vector<double> eff, gin, fair, part, cost;
    eff.reserve(outcomes.size());
    int feasible_count = 0, violated_count = 0, nonconv = 0;
    for (const auto& o : outcomes) {
        eff.push_back(o.metrics.efficiency);
        gin.push_back(o.metrics.gini);
        fair.push_back(o.metrics.fairness_one_minus_gini);
        part.push_back(o.metrics.participation);
        cost.push_back(o.metrics.avg_cost);
        feasible_count += o.feasible ? 1 : 0;
        violated_count += o.violated ? 1 : 0;
        nonconv += o.converged ? 0 : 1;
    }

    SweepRow row;
    row.mechanism = mechanism_name(mech);
    row.eff = stat_of(eff);
    row.gini_stat = stat_of(gin);
    row.fairness = stat_of(fair);
    row.participation = stat_of(part);
    row.cost = stat_of(cost);
    row.feasible_rate = static_cast<double>(feasible_count) / static_cast<double>(R);
    row.violation_rate = static_cast<double>(violated_count) / static_cast<double>(R);
    row.nonconverged = nonconv;
    row.replications = R;
    return row;
}

SweepResult fee_sweep(const ScenarioConfig& cfg) {
    if (cfg.tau_grid.empty()) throw std::invalid_argument("fee_sweep: empty tau grid");
    const MechanismKind mech =
        cfg.mechanism_set.empty() ? MechanismKind::proposed() : cfg.mechanism_set.front();
    SweepResult result;
    result.master_seed = cfg.master_seed;
    for (double tau : cfg.tau_grid) {
        ScenarioConfig point = cfg;
        point.tau = tau;
        SweepRow row = run_replications(point, mech);
        row.point["tau"] = tau;
        result.rows.push_back(std::move(row));
    }
    return result;
}

SweepResult sensitivity_grid(const ScenarioConfig& cfg) {
    if (cfg.tau_grid.empty() || cfg.g_grid.empty())
        throw std::invalid_argument("sensitivity_grid: empty grid");
    const MechanismKind mech =
        cfg.mechanism_set.empty() ? MechanismKind::proposed() : cfg.mechanism_set.front();
    SweepResult result;
    result.master_seed = cfg.master_seed;
    for (double g : cfg.g_grid) {
        const std::size_t row_base = result.rows.size();
        for (double tau : cfg.tau_grid) {
            ScenarioConfig point = cfg;
            point.tau = tau;
            point.g = g;
            SweepRow row = run_replications(point, mech);
            row.point["tau"] = tau;
            row.point["g"] = g;
            result.rows.push_back(std::move(row));
        }
        // Central-difference efficiency elasticity in tau; grid edges stay unmarked.
        for (std::size_t i = 1; i + 1 < cfg.tau_grid.size(); ++i) {
            const double dtau = cfg.tau_grid[i + 1] - cfg.tau_grid[i - 1];
            if (dtau == 0.0) continue;
            auto& row = result.rows[row_base + i];
            row.extra["deff_dtau"] = (result.rows[row_base + i + 1].eff.mean -
                                      result.rows[row_base + i - 1].eff.mean) /
                                     dtau;
        }
    }
    return result;
}

ShockResult shock_run(const ScenarioConfig& cfg, const FeeSchedule& schedule,
                      std::uint64_t replication_index) {
    schedule.validate();
    constexpr int kWindow = 30;
    constexpr int kSustain = 10;
    const int T = schedule.horizon;
    const int t0 = schedule.shock_time.value_or(T / 2);
    if (T < 2 * kWindow || t0 < kWindow || t0 > T - kWindow)
        throw std::invalid_argument("shock_run: horizon too short for the measurement windows");

    const auto pop = sample_population(cfg, replication_index);
    const double m = cfg.m;
    const double eps_p = cfg.algo.resolved_tol_primal(m);

    std::vector<double> x(pop.size(), 0.0), x_next(pop.size(), 0.0);
    double mu = cfg.algo.mu_init;

    ShockResult out;
    out.rounds.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const ContractParams ct{m, schedule.tau_path[static_cast<std::size_t>(t)],
                                schedule.g_path[static_cast<std::size_t>(t)]};
        for (std::size_t i = 0; i < pop.size(); ++i)
            x_next[i] = proximal_best_response(pop[i], ct, mu, x[i], cfg.algo.gamma);
        double s = 0.0;
        for (double v : x_next) s += v;

        double eta;
        if (const auto* cs = std::get_if<ConstantStep>(&cfg.algo.step))
            eta = cs->eta.value_or(1.0 / lipschitz_bound(pop, ct));
        else {
            const auto& ds = std::get<DiminishingStep>(cfg.algo.step);
            eta = ds.eta0 / std::pow(static_cast<double>(t) + 1.0, ds.exponent);
        }
        const double mu_next = dual_update(mu, eta, s, m);

        ShockRound round;
        round.t = t;
        round.tau = ct.fee_tau;
        round.g = ct.fee_g;
        round.mu = mu;
        round.s = s;
        round.kkt_residual = kkt_residual(mu, mu_next, s, m);
        round.metrics = basic_report(x_next, pop, ct, ct.fee_tau + mu, cfg.eps_part);
        round.allocations = x_next;
        out.rounds.push_back(std::move(round));

        x.swap(x_next);
        mu = mu_next;
    }

    auto window_mean_eff = [&](int begin, int end) {
        double acc = 0.0;
        for (int t = begin; t < end; ++t)
            acc += out.rounds[static_cast<std::size_t>(t)].metrics.efficiency;
        return acc / static_cast<double>(end - begin);
    };
    out.summary.eff_pre = window_mean_eff(t0 - kWindow, t0);
    out.summary.eff_post = window_mean_eff(T - kWindow, T);
    out.summary.resilience_r = resilience(out.summary.eff_pre, out.summary.eff_post);
    out.summary.mu_final = mu;

    const ContractParams c_post{m, schedule.tau_path[static_cast<std::size_t>(T - 1)],
                                schedule.g_path[static_cast<std::size_t>(T - 1)]};
    out.summary.mu_post_oracle = clear_bisection(pop, c_post, 1e-12).mu_star;

    int streak = 0;
    for (int t = t0 + 1; t < T; ++t) {
        streak = out.rounds[static_cast<std::size_t>(t)].kkt_residual <= eps_p ? streak + 1 : 0;
        if (streak >= kSustain) {
            out.summary.reconvergence_time = t - kSustain + 1;
            break;
        }
    }
    return out;
}

RegretResult regret_experiment(const ScenarioConfig& cfg, std::uint64_t replication_index) {
    if (!(cfg.drift_amplitude >= 0.0 && cfg.drift_amplitude < 1.0))
        throw std::invalid_argument("regret_experiment: drift amplitude must keep alpha positive");
    if (!(cfg.drift_period > 0.0))
        throw std::invalid_argument("regret_experiment: drift period must be > 0");
    const int T = cfg.regret_horizon;
    if (T < 1) throw std::invalid_argument("regret_experiment: horizon must be >= 1");

    const auto base_pop = sample_population(cfg, replication_index);
    const ContractParams c = cfg.contract();
    const double L0 = lipschitz_bound(base_pop, c);

    double eta0 = 1.0 / L0;
    double exponent = 0.5;
    if (const auto* ds = std::get_if<DiminishingStep>(&cfg.algo.step)) {
        eta0 = ds->eta0;
        exponent = ds->exponent;
    }

    // Log-spaced sampling points for the cumulative curve.
    std::vector<int> marks;
    for (double e = 1.0; e <= std::log10(static_cast<double>(T)) + 1e-12; e += 0.25) {
        const int t = static_cast<int>(std::llround(std::pow(10.0, e)));
        if (t >= 1 && t <= T && (marks.empty() || t != marks.back())) marks.push_back(t);
    }
    if (marks.empty() || marks.back() != T) marks.push_back(T);

    std::vector<AgentParams> pop = base_pop;
    std::vector<double> x(pop.size(), 0.0), play(pop.size(), 0.0);
    double mu = cfg.algo.mu_init;
    double cumulative = 0.0;

    RegretResult out;
    std::size_t next_mark = 0;
    for (int t = 0; t < T; ++t) {
        double scale = 1.0 + cfg.drift_amplitude *
                                 std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                          cfg.drift_period);
        if (cfg.drift_jump_time && t >= *cfg.drift_jump_time) scale *= cfg.drift_jump_factor;
        for (std::size_t i = 0; i < pop.size(); ++i) pop[i].alpha = base_pop[i].alpha * scale;

        for (std::size_t i = 0; i < pop.size(); ++i)
            play[i] = proximal_best_response(pop[i], c, mu, x[i], cfg.algo.gamma);
        double s = 0.0;
        for (double v : play) s += v;
        x = play;
        if (s > c.capacity_m) {
            const double f = c.capacity_m / s;
            for (double& v : play) v *= f;
        }

        const ClearingSolution comp = clear_bisection(pop, c, 1e-10);
        cumulative += efficiency(comp.allocations, pop, c, cfg.eps_part) -
                      efficiency(play, pop, c, cfg.eps_part);

        const double eta = eta0 / std::pow(static_cast<double>(t) + 1.0, exponent);
        mu = dual_update(mu, eta, s, c.capacity_m);

        if (next_mark < marks.size() && t + 1 == marks[next_mark]) {
            out.curve.push_back({t + 1, cumulative});
            ++next_mark;
        }
    }
    out.final_cumulative = cumulative;

    // Least-squares slope of log(regret) vs log(T) over T in [1e2, 1e4].
    std::vector<double> lx, ly;
    for (const auto& pt : out.curve) {
        if (pt.t < 100 || pt.t > 10000) continue;
        lx.push_back(std::log(static_cast<double>(pt.t)));
        ly.push_back(std::log(std::max(pt.cumulative, 1e-12)));
    }
    if (lx.size() >= 2) {
        const double mx = mean_of(lx), my = mean_of(ly);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxx += (lx[i] - mx) * (lx[i] - mx);
            sxy += (lx[i] - mx) * (ly[i] - my);
        }
        if (sxx > 0.0) out.fitted_slope = sxy / sxx;
    }
    return out;
}

std::vector<std::pair<double, double>> capacity_statics(const std::vector<AgentParams>& agents,
                                                        const ContractParams& c,
                                                        const std::vector<double>& m_grid) {
    std::vector<std::pair<double, double>> series;
    series.reserve(m_grid.size());
    for (double m : m_grid) {
        const ContractParams cm{m, c.fee_tau, c.fee_g};
        series.emplace_back(m, clear_bisection(agents, cm, 1e-12).mu_star);
    }
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        if (series[i + 1].first < series[i].first) continue;  // unordered grid: skip the check
        const bool same_m = series[i + 1].first == series[i].first;
        if (series[i + 1].second > series[i].second + 1e-9)
            throw std::runtime_error("capacity_statics: clearing price increased with capacity");
        if (!same_m && series[i].second > 1e-9 && series[i + 1].second >= series[i].second)
            throw std::runtime_error("capacity_statics: price not strictly decreasing while positive");
    }
    return series;
}

}  // namespace capalloc
