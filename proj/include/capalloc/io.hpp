#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "capalloc/agent.hpp"
#include "capalloc/experiments.hpp"

namespace capalloc {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct MovieLensRecord {
    std::uint32_t user_id = 0;
    std::uint32_t item_id = 0;
    int rating = 0;  // 1..5
    std::int64_t timestamp = 0;
};

struct IngestReport {
    std::size_t records = 0;
    std::size_t users = 0;
    std::size_t malformed = 0;
    std::vector<std::size_t> malformed_lines;  // first few offenders, 1-based
};

struct MovieLensPopulation {
    std::vector<AgentParams> agents;
    IngestReport report;
};

// u.data layout: tab-separated user, item, rating, timestamp; one record per
// line. Per user, the mean rating maps linearly onto alpha in [5, 20]
// (alpha = 5 + 15*(rbar-1)/4); beta is drawn U(0.5, 5) from a substream of
// (seed, user_id). Lenient mode skips malformed lines and reports them;
// strict mode throws with the line number.
MovieLensPopulation load_movielens(const std::string& path, std::uint64_t seed,
                                   bool strict = false);

// Key-value config file with [population]/[contract]/[algo]/[experiment]/
// [movielens] sections; unknown keys are rejected, missing ones take the
// benchmark defaults. See docs/config.md for the schema.
ScenarioConfig parse_scenario_config(const std::string& path);
ScenarioConfig parse_scenario_config_text(const std::string& text, const std::string& origin);

// Canonical emission; re-parsing it reproduces the config exactly.
std::string write_scenario_config(const ScenarioConfig& cfg);

// FNV-1a over the canonical config text, as a hex string.
std::string config_digest(const ScenarioConfig& cfg);

using Cell = std::variant<double, std::int64_t, std::string>;

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::pair<std::string, std::string>> metadata;

    void add_metadata(const std::string& key, const std::string& value);
    void push_row(std::vector<Cell> row);  // arity-checked
};

enum class OutputFormat { Csv, Json };

// Numeric cells render through the same 6-significant-digit formatter in
// both formats, so CSV and JSON parse back to identical values. Writes are
// atomic (temp file, then rename).
void write_results(const ResultTable& table, const std::string& path, OutputFormat format);
std::string render_results(const ResultTable& table, OutputFormat format);
std::string format_sig6(double v);

OutputFormat parse_format(const std::string& name);

// Subcommand surface: clear, compare, sweep, grid, shock, regret, statics,
// movielens; common flags --config/--seed/--out/--format. Exit 0 success,
// 1 validation error, 2 runtime failure.
int cli_dispatch(const std::vector<std::string>& argv);

}  // namespace capalloc
