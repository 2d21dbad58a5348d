#include "capalloc/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "capalloc/rng.hpp"

namespace capalloc {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, delim)) parts.push_back(cur);
    return parts;
}

[[noreturn]] void config_error(const std::string& origin, const std::string& key,
                               const std::string& what) {
    throw std::invalid_argument(origin + ": " + key + ": " + what);
}

double parse_double(const std::string& origin, const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        config_error(origin, key, "expected a number, got '" + value + "'");
    }
}

std::int64_t parse_int(const std::string& origin, const std::string& key,
                       const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        config_error(origin, key, "expected an integer, got '" + value + "'");
    }
}

std::vector<double> parse_grid(const std::string& origin, const std::string& key,
                               const std::string& value) {
    std::vector<double> grid;
    for (const auto& part : split(value, ',')) {
        const std::string p = trim(part);
        if (p.empty()) config_error(origin, key, "empty grid entry");
        grid.push_back(parse_double(origin, key, p));
    }
    if (grid.empty()) config_error(origin, key, "empty grid");
    return grid;
}

MechanismKind parse_mechanism(const std::string& origin, const std::string& key,
                              const std::string& name) {
    if (name == "proposed") return MechanismKind::proposed();
    if (name == "proportional") return MechanismKind::proportional();
    if (name == "flat") return MechanismKind::flat_contract(0.0);
    if (name == "none" || name == "no_enforcement") return MechanismKind::no_enforcement();
    config_error(origin, key, "unknown mechanism '" + name + "'");
}

void apply_key(ScenarioConfig& cfg, const std::string& origin, const std::string& section,
               const std::string& key, const std::string& value) {
    const std::string path = section + "." + key;
    cfg.explicit_keys.insert(path);

    auto as_double = [&] { return parse_double(origin, path, value); };
    auto as_int = [&] { return parse_int(origin, path, value); };
    auto positive = [&](double v) {
        if (!(v > 0.0) || !std::isfinite(v)) config_error(origin, path, "must be > 0");
        return v;
    };
    auto non_negative = [&](double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) config_error(origin, path, "must be >= 0");
        return v;
    };

    if (section == "population") {
        if (key == "n") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.n = static_cast<int>(v);
        } else if (key == "alpha_lo") cfg.alpha_dist.lo = positive(as_double());
        else if (key == "alpha_hi") cfg.alpha_dist.hi = positive(as_double());
        else if (key == "beta_lo") cfg.beta_dist.lo = positive(as_double());
        else if (key == "beta_hi") cfg.beta_dist.hi = positive(as_double());
        else config_error(origin, path, "unknown key");
        return;
    }
    if (section == "contract") {
        if (key == "capacity") cfg.m = positive(as_double());
        else if (key == "tau") cfg.tau = non_negative(as_double());
        else if (key == "g") cfg.g = non_negative(as_double());
        else config_error(origin, path, "unknown key");
        return;
    }
    if (section == "algo") {
        if (key == "step") {
            if (value == "constant") cfg.algo.step = ConstantStep{};
            else if (value == "diminishing") cfg.algo.step = DiminishingStep{};
            else config_error(origin, path, "must be 'constant' or 'diminishing'");
        } else if (key == "eta") {
            if (value == "auto") cfg.algo.step = ConstantStep{};
            else cfg.algo.step = ConstantStep{positive(as_double())};
        } else if (key == "eta0" || key == "p") {
            DiminishingStep ds;
            if (const auto* prev = std::get_if<DiminishingStep>(&cfg.algo.step)) ds = *prev;
            if (key == "eta0") ds.eta0 = positive(as_double());
            else {
                ds.exponent = as_double();
                if (!(ds.exponent > 0.0 && ds.exponent <= 1.0))
                    config_error(origin, path, "must be in (0, 1]");
            }
            cfg.algo.step = ds;
        } else if (key == "gamma") cfg.algo.gamma = positive(as_double());
        else if (key == "tol_primal") {
            if (value == "auto") cfg.algo.tol_primal.reset();
            else cfg.algo.tol_primal = positive(as_double());
        } else if (key == "tol_dual") cfg.algo.tol_dual = positive(as_double());
        else if (key == "max_iters") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.algo.max_iters = static_cast<int>(v);
        } else if (key == "mc_samples") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.algo.mc_samples = static_cast<int>(v);
        } else if (key == "noise_sigma") cfg.algo.noise_sigma = non_negative(as_double());
        else if (key == "mu_init") cfg.algo.mu_init = non_negative(as_double());
        else if (key == "record_allocations") {
            if (value == "true") cfg.algo.record_allocations = true;
            else if (value == "false") cfg.algo.record_allocations = false;
            else config_error(origin, path, "must be 'true' or 'false'");
        } else config_error(origin, path, "unknown key");
        return;
    }
    if (section == "experiment") {
        if (key == "replications") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.replications = static_cast<int>(v);
        } else if (key == "master_seed") cfg.master_seed = static_cast<std::uint64_t>(as_int());
        else if (key == "eps_part") cfg.eps_part = positive(as_double());
        else if (key == "mechanisms") {
            cfg.mechanism_set.clear();
            for (const auto& part : split(value, ','))
                cfg.mechanism_set.push_back(parse_mechanism(origin, path, trim(part)));
            if (cfg.mechanism_set.empty()) config_error(origin, path, "empty mechanism list");
        } else if (key == "flat_fee") {
            if (value == "auto") cfg.flat_fee.reset();
            else cfg.flat_fee = non_negative(as_double());
        } else if (key == "tau_grid") {
            cfg.tau_grid = parse_grid(origin, path, value);
            for (double v : cfg.tau_grid) non_negative(v);
        } else if (key == "g_grid") {
            cfg.g_grid = parse_grid(origin, path, value);
            for (double v : cfg.g_grid) non_negative(v);
        } else if (key == "m_grid") {
            cfg.m_grid = parse_grid(origin, path, value);
            for (double v : cfg.m_grid) positive(v);
        } else if (key == "horizon") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.horizon = static_cast<int>(v);
        } else if (key == "shock_time") {
            const auto v = as_int();
            if (v < 0) config_error(origin, path, "must be >= 0");
            cfg.shock_time = static_cast<int>(v);
        } else if (key == "tau_post") cfg.tau_post = non_negative(as_double());
        else if (key == "drift_amplitude") {
            cfg.drift_amplitude = non_negative(as_double());
            if (cfg.drift_amplitude >= 1.0) config_error(origin, path, "must be < 1");
        } else if (key == "drift_period") cfg.drift_period = positive(as_double());
        else if (key == "drift_jump_time") cfg.drift_jump_time = static_cast<int>(as_int());
        else if (key == "drift_jump_factor") cfg.drift_jump_factor = positive(as_double());
        else if (key == "regret_horizon") {
            const auto v = as_int();
            if (v < 1) config_error(origin, path, "must be >= 1");
            cfg.regret_horizon = static_cast<int>(v);
        } else config_error(origin, path, "unknown key");
        return;
    }
    if (section == "movielens") {
        if (key == "data") cfg.movielens_path = value;
        else if (key == "capacity_per_agent") cfg.movielens_capacity_per_agent = positive(as_double());
        else config_error(origin, path, "unknown key");
        return;
    }
    config_error(origin, section, "unknown section");
}

void validate_config(const ScenarioConfig& cfg, const std::string& origin) {
    if (cfg.alpha_dist.lo > cfg.alpha_dist.hi)
        config_error(origin, "population.alpha_lo", "lower bound above upper bound");
    if (cfg.beta_dist.lo > cfg.beta_dist.hi)
        config_error(origin, "population.beta_lo", "lower bound above upper bound");
}

}  // namespace

ScenarioConfig parse_scenario_config_text(const std::string& text, const std::string& origin) {
    ScenarioConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                            ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": key outside any [section]");
        apply_key(cfg, origin, section, key, value);
    }
    validate_config(cfg, origin);
    return cfg;
}

ScenarioConfig parse_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_config_text(buf.str(), path);
}

std::string write_scenario_config(const ScenarioConfig& cfg) {
    std::ostringstream out;
    auto num = [](double v) { return format_sig6(v); };
    out << "[population]\n";
    out << "n = " << cfg.n << "\n";
    out << "alpha_lo = " << num(cfg.alpha_dist.lo) << "\n";
    out << "alpha_hi = " << num(cfg.alpha_dist.hi) << "\n";
    out << "beta_lo = " << num(cfg.beta_dist.lo) << "\n";
    out << "beta_hi = " << num(cfg.beta_dist.hi) << "\n";
    out << "\n[contract]\n";
    out << "capacity = " << num(cfg.m) << "\n";
    out << "tau = " << num(cfg.tau) << "\n";
    out << "g = " << num(cfg.g) << "\n";
    out << "\n[algo]\n";
    if (const auto* cs = std::get_if<ConstantStep>(&cfg.algo.step)) {
        out << "step = constant\n";
        out << "eta = " << (cs->eta ? num(*cs->eta) : std::string("auto")) << "\n";
    } else {
        const auto& ds = std::get<DiminishingStep>(cfg.algo.step);
        out << "step = diminishing\n";
        out << "eta0 = " << num(ds.eta0) << "\n";
        out << "p = " << num(ds.exponent) << "\n";
    }
    out << "gamma = " << num(cfg.algo.gamma) << "\n";
    out << "tol_primal = "
        << (cfg.algo.tol_primal ? num(*cfg.algo.tol_primal) : std::string("auto")) << "\n";
    out << "tol_dual = " << num(cfg.algo.tol_dual) << "\n";
    out << "max_iters = " << cfg.algo.max_iters << "\n";
    out << "mc_samples = " << cfg.algo.mc_samples << "\n";
    out << "noise_sigma = " << num(cfg.algo.noise_sigma) << "\n";
    out << "mu_init = " << num(cfg.algo.mu_init) << "\n";
    out << "record_allocations = " << (cfg.algo.record_allocations ? "true" : "false") << "\n";
    out << "\n[experiment]\n";
    out << "replications = " << cfg.replications << "\n";
    out << "master_seed = " << cfg.master_seed << "\n";
    out << "eps_part = " << num(cfg.eps_part) << "\n";
    out << "mechanisms = ";
    for (std::size_t i = 0; i < cfg.mechanism_set.size(); ++i)
        out << (i ? ", " : "") << mechanism_name(cfg.mechanism_set[i]);
    out << "\n";
    out << "flat_fee = " << (cfg.flat_fee ? num(*cfg.flat_fee) : std::string("auto")) << "\n";
    auto grid = [&](const char* name, const std::vector<double>& g) {
        out << name << " = ";
        for (std::size_t i = 0; i < g.size(); ++i) out << (i ? ", " : "") << num(g[i]);
        out << "\n";
    };
    grid("tau_grid", cfg.tau_grid);
    grid("g_grid", cfg.g_grid);
    grid("m_grid", cfg.m_grid);
    out << "horizon = " << cfg.horizon << "\n";
    out << "shock_time = " << cfg.shock_time << "\n";
    out << "tau_post = " << num(cfg.tau_post) << "\n";
    out << "drift_amplitude = " << num(cfg.drift_amplitude) << "\n";
    out << "drift_period = " << num(cfg.drift_period) << "\n";
    if (cfg.drift_jump_time) {
        out << "drift_jump_time = " << *cfg.drift_jump_time << "\n";
        out << "drift_jump_factor = " << num(cfg.drift_jump_factor) << "\n";
    }
    out << "regret_horizon = " << cfg.regret_horizon << "\n";
    if (!cfg.movielens_path.empty() || cfg.movielens_capacity_per_agent != 0.2) {
        out << "\n[movielens]\n";
        if (!cfg.movielens_path.empty()) out << "data = " << cfg.movielens_path << "\n";
        out << "capacity_per_agent = " << num(cfg.movielens_capacity_per_agent) << "\n";
    }
    return out.str();
}

std::string config_digest(const ScenarioConfig& cfg) {
    const std::string text = write_scenario_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

MovieLensPopulation load_movielens(const std::string& path, std::uint64_t seed, bool strict) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open MovieLens file: " + path);

    MovieLensPopulation out;
    std::map<std::uint32_t, std::pair<double, std::size_t>> per_user;  // rating sum, count

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, '\t');
        bool ok = fields.size() == 4;
        std::uint32_t user = 0;
        int rating = 0;
        if (ok) {
            try {
                std::size_t p1 = 0, p2 = 0, p3 = 0;
                const long u = std::stol(trim(fields[0]), &p1);
                (void)std::stol(trim(fields[1]), &p2);  // item id, unused downstream
                const long r = std::stol(trim(fields[2]), &p3);
                std::size_t p4 = 0;
                (void)std::stoll(trim(fields[3]), &p4);
                ok = u > 0 && r >= 1 && r <= 5;
                user = static_cast<std::uint32_t>(u);
                rating = static_cast<int>(r);
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (!ok) {
            if (strict)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": malformed MovieLens record");
            ++out.report.malformed;
            if (out.report.malformed_lines.size() < 16) out.report.malformed_lines.push_back(line_no);
            continue;
        }
        ++out.report.records;
        auto& agg = per_user[user];
        agg.first += static_cast<double>(rating);
        agg.second += 1;
    }

    out.report.users = per_user.size();
    out.agents.reserve(per_user.size());
    for (const auto& [user, agg] : per_user) {
        const double mean_rating = agg.first / static_cast<double>(agg.second);
        const double alpha = 5.0 + 15.0 * (mean_rating - 1.0) / 4.0;
        Rng rng(substream_seed(seed, user));
        const double beta = rng.uniform(0.5, 5.0);
        out.agents.emplace_back(alpha, beta, user);
    }
    return out;
}

void ResultTable::add_metadata(const std::string& key, const std::string& value) {
    metadata.emplace_back(key, value);
}

void ResultTable::push_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
        throw std::invalid_argument("ResultTable: row arity does not match header");
    rows.push_back(std::move(row));
}

std::string format_sig6(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += "\"";
    return out;
}

std::string render_cell_csv(const Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) return format_sig6(*d);
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
    return csv_escape(std::get<std::string>(cell));
}

nlohmann::json render_cell_json(const Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) {
        if (std::isnan(*d)) return nullptr;
        // Quantize through the shared 6-significant-digit rendering so CSV
        // and JSON parse back to identical values.
        return std::strtod(format_sig6(*d).c_str(), nullptr);
    }
    if (const auto* i = std::get_if<std::int64_t>(&cell)) return *i;
    return std::get<std::string>(cell);
}

}  // namespace

std::string render_results(const ResultTable& table, OutputFormat format) {
    if (format == OutputFormat::Csv) {
        std::ostringstream out;
        out << "# schema_version = " << kSchemaVersion << "\n";
        for (const auto& [k, v] : table.metadata) out << "# " << k << " = " << v << "\n";
        for (std::size_t i = 0; i < table.columns.size(); ++i)
            out << (i ? "," : "") << csv_escape(table.columns[i]);
        out << "\n";
        for (const auto& row : table.rows) {
            for (std::size_t i = 0; i < row.size(); ++i)
                out << (i ? "," : "") << render_cell_csv(row[i]);
            out << "\n";
        }
        return out.str();
    }
    nlohmann::json doc;
    doc["schema_version"] = kSchemaVersion;
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : table.metadata) meta[k] = v;
    doc["metadata"] = meta;
    doc["columns"] = table.columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json jrow = nlohmann::json::array();
        for (const auto& cell : row) jrow.push_back(render_cell_json(cell));
        rows.push_back(std::move(jrow));
    }
    doc["rows"] = rows;
    return doc.dump(2) + "\n";
}

void write_results(const ResultTable& table, const std::string& path, OutputFormat format) {
    const std::string payload = render_results(table, format);
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << payload;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw std::runtime_error("rename failed for " + target.string() + ": " + ec.message());
}

OutputFormat parse_format(const std::string& name) {
    if (name == "csv") return OutputFormat::Csv;
    if (name == "json") return OutputFormat::Json;
    throw std::invalid_argument("unknown output format '" + name + "' (expected csv or json)");
}

}  // namespace capalloc
