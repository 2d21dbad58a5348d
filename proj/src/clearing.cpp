#include "capalloc/clearing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "capalloc/rng.hpp"

namespace capalloc {

namespace {

void check_finite_inputs(const std::vector<AgentParams>& agents, const ContractParams& c) {
    if (!std::isfinite(c.capacity_m) || !std::isfinite(c.fee_tau) || !std::isfinite(c.fee_g))
        throw std::invalid_argument("contract parameters must be finite");
    for (const auto& a : agents)
        if (!std::isfinite(a.alpha) || !std::isfinite(a.beta))
            throw std::invalid_argument("agent parameters must be finite");
}

std::vector<double> best_responses(const std::vector<AgentParams>& agents,
                                   const ContractParams& c, double mu) {
    std::vector<double> x(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) x[i] = best_response(agents[i], c, mu);
    return x;
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double z : v) s += z;
    return s;
}

}  // namespace

double AlgoConfig::resolved_tol_primal(double m) const {
    return tol_primal.value_or(1e-6 * m);
}

double aggregate_demand(const std::vector<AgentParams>& agents, const ContractParams& c,
                        double mu) {
    double s = 0.0;
    for (const auto& a : agents) s += best_response(a, c, mu);
    return s;
}

double lipschitz_bound(const std::vector<AgentParams>& agents, const ContractParams& c) {
    if (agents.empty()) throw std::invalid_argument("lipschitz_bound: empty population");
    double L = 0.0;
    for (const auto& a : agents) {
        const double d = a.beta + c.fee_tau;
        L += a.alpha / (d * d);
    }
    return L;
}

double dual_update(double mu, double eta, double s_hat, double m) {
    if (!(eta > 0.0)) throw std::invalid_argument("dual_update: eta must be > 0");
    return std::max(0.0, mu + eta * (s_hat - m));
}

ClearingSolution clear_bisection(const std::vector<AgentParams>& agents,
                                 const ContractParams& c, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("clear_bisection: tol must be > 0");
    check_finite_inputs(agents, c);

    const double m = c.capacity_m;
    ClearingSolution sol;

    double upper = 0.0;
    for (const auto& a : agents) upper = std::max(upper, a.alpha - c.fee_tau);
    if (agents.empty() || upper <= 0.0) {
        // Market trivially empty: every reservation level is below the fee.
        sol.allocations.assign(agents.size(), 0.0);
        sol.mu_star = 0.0;
        sol.converged = true;
        sol.slack = m;
        return sol;
    }

    auto record = [&sol, m](int t, double mu, double s) {
        IterateRecord rec;
        rec.t = t;
        rec.mu = mu;
        rec.s_hat = s;
        rec.r_primal = std::abs(s - m);
        rec.r_dual = 0.0;
        sol.trace.push_back(std::move(rec));
    };

    const double s0 = aggregate_demand(agents, c, 0.0);
    record(0, 0.0, s0);
    if (s0 <= m) {
        // Slack market: price 0, complementary slackness carries the rest.
        sol.allocations = best_responses(agents, c, 0.0);
        sol.mu_star = 0.0;
        sol.converged = true;
        sol.iterations = 1;
        sol.slack = m - s0;
        return sol;
    }

    double lo = 0.0, s_lo = s0;
    double hi = upper, s_hi = aggregate_demand(agents, c, hi);  // 0 by construction
    int iters = 1;
    while (hi - lo >= tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket at floating-point resolution
        const double s_mid = aggregate_demand(agents, c, mid);
        record(iters++, mid, s_mid);
        if (s_mid > m) {
            lo = mid;
            s_lo = s_mid;
        } else {
            hi = mid;
            s_hi = s_mid;
        }
    }

    // With g > 0 demand can jump over m, leaving no exact root in the
    // bracket; settle on the endpoint with the smaller clearing gap (the
    // feasible side wins ties) and surface the residual.
    const double gap_lo = std::abs(s_lo - m);
    const double gap_hi = std::abs(s_hi - m);
    const bool take_hi = gap_hi <= gap_lo;
    sol.mu_star = take_hi ? hi : lo;
    sol.allocations = best_responses(agents, c, sol.mu_star);
    sol.demand_gap = take_hi ? gap_hi : gap_lo;
    sol.converged = true;
    sol.iterations = iters;
    const double s_star = sum(sol.allocations);
    sol.slack = sol.mu_star == 0.0 ? std::max(0.0, m - s_star) : 0.0;
    return sol;
}

namespace {

struct LoopOptions {
    bool window_stopping = false;  // trailing-window residual means (stochastic)
    int window = 50;
    bool rewind_to_feasible = true;  // on exhaustion, return best feasible iterate
};

double step_size(const StepSchedule& schedule, int t, double L) {
    if (const auto* cs = std::get_if<ConstantStep>(&schedule)) {
        const double eta = cs->eta.value_or(1.0 / L);
        if (!(eta > 0.0) || !(eta < 2.0 / L))
            throw std::invalid_argument("constant step size must lie in (0, 2/L)");
        return eta;
    }
    const auto& ds = std::get<DiminishingStep>(schedule);
    return ds.eta0 / std::pow(static_cast<double>(t) + 1.0, ds.exponent);
}

void validate_common(const AlgoConfig& cfg) {
    if (!(cfg.gamma > 0.0)) throw std::invalid_argument("AlgoConfig: gamma must be > 0");
    if (cfg.max_iters < 1) throw std::invalid_argument("AlgoConfig: max_iters must be >= 1");
    if (cfg.mc_samples < 1) throw std::invalid_argument("AlgoConfig: mc_samples must be >= 1");
    if (!(cfg.noise_sigma >= 0.0)) throw std::invalid_argument("AlgoConfig: noise_sigma must be >= 0");
    if (!(cfg.mu_init >= 0.0)) throw std::invalid_argument("AlgoConfig: mu_init must be >= 0");
    if (!(cfg.tol_dual > 0.0)) throw std::invalid_argument("AlgoConfig: tol_dual must be > 0");
    if (const auto* ds = std::get_if<DiminishingStep>(&cfg.step)) {
        if (!(ds->eta0 > 0.0)) throw std::invalid_argument("AlgoConfig: eta0 must be > 0");
        if (!(ds->exponent > 0.0 && ds->exponent <= 1.0))
            throw std::invalid_argument("AlgoConfig: diminishing exponent must be in (0, 1]");
    }
}

ClearingSolution run_primal_dual(const std::vector<AgentParams>& agents, const ContractParams& c,
                                 const AlgoConfig& cfg, std::uint64_t rng_seed,
                                 const LoopOptions& opts) {
    check_finite_inputs(agents, c);
    validate_common(cfg);

    const std::size_t n = agents.size();
    const double m = c.capacity_m;
    const double eps_p = cfg.resolved_tol_primal(m);
    const double eps_d = cfg.tol_dual;

    ClearingSolution sol;
    if (n == 0) {
        sol.converged = true;
        sol.slack = m;
        return sol;
    }

    const double L = lipschitz_bound(agents, c);
    Rng rng(rng_seed);
    const bool noisy = cfg.noise_sigma > 0.0;

    std::vector<double> x(n, 0.0), x_next(n, 0.0);
    double mu = cfg.mu_init;

    // Rolling residual sums for the trailing-window stopping rule.
    std::vector<double> win_p, win_d;
    double win_p_sum = 0.0, win_d_sum = 0.0;
    std::size_t win_pos = 0;
    if (opts.window_stopping) {
        win_p.assign(static_cast<std::size_t>(opts.window), 0.0);
        win_d.assign(static_cast<std::size_t>(opts.window), 0.0);
    }

    // Best feasible iterate seen, for exhaustion fallback.
    double best_gap = std::numeric_limits<double>::infinity();
    double best_mu = mu;
    std::vector<double> best_x;

    bool converged = false;
    int t = 0;
    for (; t < cfg.max_iters; ++t) {
        double x_move = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x_next[i] = proximal_best_response(agents[i], c, mu, x[i], cfg.gamma);
            x_move = std::max(x_move, std::abs(x_next[i] - x[i]));
        }
        const double s_true = sum(x_next);

        double s_hat = s_true;
        if (noisy) {
            double acc = 0.0;
            for (int k = 0; k < cfg.mc_samples; ++k)
                for (std::size_t i = 0; i < n; ++i)
                    acc += std::max(0.0, x_next[i] + rng.normal(0.0, cfg.noise_sigma));
            s_hat = acc / static_cast<double>(cfg.mc_samples);
        }

        const double eta = step_size(cfg.step, t, L);
        const double mu_next = dual_update(mu, eta, s_hat, m);
        const double r_p = std::abs(s_hat - m);
        const double r_d = std::abs(mu_next - mu);

        IterateRecord rec;
        rec.t = t;
        rec.mu = mu;
        rec.s_hat = s_hat;
        rec.r_primal = r_p;
        rec.r_dual = r_d;
        if (cfg.record_allocations) rec.allocations = x_next;
        sol.trace.push_back(std::move(rec));

        if (s_true <= m + eps_p) {
            const double gap = std::abs(s_true - m);
            if (gap < best_gap) {
                best_gap = gap;
                best_mu = mu;
                best_x = x_next;
            }
        }

        if (opts.window_stopping) {
            const std::size_t w = win_p.size();
            win_p_sum += r_p - win_p[win_pos];
            win_d_sum += r_d - win_d[win_pos];
            win_p[win_pos] = r_p;
            win_d[win_pos] = r_d;
            win_pos = (win_pos + 1) % w;
            if (t + 1 >= static_cast<int>(w) && win_p_sum / static_cast<double>(w) <= eps_p &&
                win_d_sum / static_cast<double>(w) <= eps_d)
                converged = true;
        } else if (r_p <= eps_p && r_d <= eps_d) {
            converged = true;
        }
        // Slack regime: the projection pins mu at 0 while demand sits below
        // capacity, so the primal residual never vanishes; complementary
        // slackness says that is the equilibrium.
        if (!converged && mu == 0.0 && mu_next == 0.0 && s_true <= m && x_move <= eps_d)
            converged = true;

        x.swap(x_next);
        mu = mu_next;
        if (converged) {
            ++t;
            break;
        }
    }

    sol.iterations = t;
    sol.converged = converged;
    if (!converged && opts.rewind_to_feasible && !best_x.empty()) {
        sol.allocations = std::move(best_x);
        sol.mu_star = best_mu;
    } else {
        sol.allocations = std::move(x);
        sol.mu_star = mu;
    }
    const double s_final = sum(sol.allocations);
    sol.demand_gap = std::abs(s_final - m);
    sol.slack = sol.mu_star == 0.0 ? std::max(0.0, m - s_final) : 0.0;
    return sol;
}

}  // namespace

ClearingSolution clear_decentralized(const std::vector<AgentParams>& agents,
                                     const ContractParams& c, const AlgoConfig& cfg,
                                     std::uint64_t rng_seed) {
    LoopOptions opts;
    opts.window_stopping = false;
    opts.rewind_to_feasible = cfg.noise_sigma == 0.0;
    return run_primal_dual(agents, c, cfg, rng_seed, opts);
}

ClearingSolution clear_stochastic(const std::vector<AgentParams>& agents,
                                  const ContractParams& c, const AlgoConfig& cfg,
                                  std::uint64_t rng_seed) {
    const auto* ds = std::get_if<DiminishingStep>(&cfg.step);
    if (ds == nullptr)
        throw std::invalid_argument("clear_stochastic: requires a diminishing step schedule");
    if (!(ds->exponent >= 0.5 && ds->exponent <= 1.0))
        throw std::invalid_argument("clear_stochastic: step exponent must be in [0.5, 1]");
    LoopOptions opts;
    opts.window_stopping = true;
    opts.rewind_to_feasible = false;  // last iterate is the estimator
    return run_primal_dual(agents, c, cfg, rng_seed, opts);
}

RateDiagnostics diagnose_rates(const IterateTrace& trace, double mu_star_oracle,
                               const std::vector<AgentParams>& agents,
                               const ContractParams& c) {
    if (trace.empty()) throw std::invalid_argument("diagnose_rates: empty trace");

    RateDiagnostics diag;
    diag.lipschitz_L = lipschitz_bound(agents, c);

    double kappa = 0.0;
    bool kappa_estimable = false;
    double alpha_emp = std::numeric_limits<double>::infinity();

    for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
        const double e0 = std::abs(trace[i].mu - mu_star_oracle);
        const double e1 = std::abs(trace[i + 1].mu - mu_star_oracle);
        if (e1 > e0 + 1e-12) ++diag.fejer_violations;
        if (e0 > 1e-8) {
            kappa = std::max(kappa, e1 / e0);
            kappa_estimable = true;
        }
        const double dmu = trace[i + 1].mu - trace[i].mu;
        if (std::abs(dmu) > 1e-12)
            alpha_emp = std::min(alpha_emp, std::abs((trace[i + 1].s_hat - trace[i].s_hat) / dmu));
    }
    if (kappa_estimable) diag.contraction_kappa = kappa;
    diag.strong_mono_alpha = std::isfinite(alpha_emp) ? alpha_emp : 0.0;

    diag.ergodic_residual_curve.reserve(trace.size());
    double running = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        running += trace[i].r_primal;
        diag.ergodic_residual_curve.emplace_back(static_cast<int>(i) + 1,
                                                 running / static_cast<double>(i + 1));
    }
    return diag;
}

}  // namespace capalloc
