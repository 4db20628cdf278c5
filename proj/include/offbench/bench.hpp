#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offbench/config.hpp"

namespace offbench::bench {

struct SweepAxis {
    std::string field;
    std::vector<nlohmann::json> values;
};

/// Grid over ChoiceConfig fields. Trials = algos x datasets x prod(axis sizes) x seeds.
struct SweepSpec {
    std::vector<algo::AlgoId> algos;
    std::string preset;                                  // optional
    nlohmann::json base = nlohmann::json::object();      // partial config applied to every trial
    std::vector<SweepAxis> axes;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::string> datasets;
};

/// Accepts axes either as [{"field": f, "values": [...]}, ...] or as {"f": [...], ...}.
SweepSpec parse_sweep_spec(const nlohmann::json& j);
nlohmann::json to_json(const SweepSpec& s);

struct SweepTrial {
    std::size_t index = 0;
    std::string name; // directory name under <out>/trials
    algo::AlgoId algo = algo::AlgoId::bc;
    std::string dataset;
    nlohmann::json axis_values = nlohmann::json::object();
    std::uint64_t seed = 0;
    algo::ChoiceConfig config;
};

/// Every grid point validated; a ConfigError names the offending field.
std::vector<SweepTrial> expand_sweep(const SweepSpec& spec);

/// Base config for an algorithm, optionally with a preset, then the partial JSON on top.
algo::ChoiceConfig resolve_config(algo::AlgoId algo, const std::string& preset, const nlohmann::json& partial);

/// Worker cap: OFFBENCH_WORKERS when set and positive, else `fallback`.
int worker_limit(int fallback);

/// Runs each argv as a child process with at most `workers` alive. `on_exit(index, status)` is
/// called in the parent as children finish. Returns the number of non-zero exits.
std::size_t run_processes(const std::vector<std::vector<std::string>>& commands, int workers,
                          const std::function<void(std::size_t, int)>& on_exit);

// ---- reports ---------------------------------------------------------------

struct RunRecord {
    std::filesystem::path dir;
    std::string algo;
    std::string task; // "<env>-<dataset kind>"
    std::string env_id;
    nlohmann::json config; // full ChoiceConfig as JSON
    std::uint64_t seed = 0;
    double last_avg = 0.0;
    double best_avg = 0.0;
    double last_running_avg = 0.0;
};

/// Reads config.json + summary.json of one run directory. Throws ReportError when incomplete.
RunRecord load_run(const std::filesystem::path& dir);

/// All run directories (containing summary.json) under the given roots, sorted by path.
std::vector<RunRecord> collect_runs(const std::vector<std::filesystem::path>& roots);

struct ReportRow {
    std::string task;
    std::string algo;
    std::size_t seeds = 0;
    double last_avg = 0.0;
    double best_avg = 0.0;
    double last_running_avg = 0.0;
    std::optional<double> normalized; // normalized last running average, when references exist
};

/// One row per (task, algo), metrics averaged over runs; sorted by task then algo.
std::vector<ReportRow> report_rows(const std::vector<RunRecord>& runs);

enum class Format { csv, md };
Format parse_format(const std::string& s);

std::string format_report(const std::vector<ReportRow>& rows, Format f);

struct AblationRow {
    std::string task;
    std::string algo;
    std::string field;
    std::string value; // JSON text of the variant value
    std::size_t seeds = 0;
    double baseline = 0.0;
    double variant = 0.0;
    double delta = 0.0;
    std::optional<double> percent; // 100 * delta / |baseline|; empty for a zero baseline
};

/// Pairs every run that differs from the baseline config in exactly one field (seed ignored)
/// with the baseline runs of the same task and algorithm. Sorted by |delta| descending.
/// `baseline` is a partial config over defaults_for(algo); `metric` is one of the summary keys.
std::vector<AblationRow> ablation_report(const std::vector<RunRecord>& runs, const nlohmann::json& baseline,
                                         const std::string& preset = "",
                                         const std::string& metric = "last_running_avg");

std::string format_ablation(const std::vector<AblationRow>& rows, Format f);

/// Fixed one-decimal formatting used by every report ("-0.0" is printed as "0.0").
std::string fmt1(double x);

} // namespace offbench::bench
