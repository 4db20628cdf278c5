#include "offbench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "offbench/datagen.hpp"
#include "offbench/errors.hpp"
#include "offbench/eval.hpp"

extern char** environ;

namespace offbench::bench {

SweepSpec parse_sweep_spec(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("sweep", "expected a JSON object");
    static const std::set<std::string> known{"algos", "preset", "base", "axes", "seeds", "datasets"};
    for (const auto& [k, v] : j.items())
        if (!k.starts_with('_') && !known.count(k)) throw ConfigError(k, "unknown sweep key");
    SweepSpec s;
    try {
        for (const auto& a : j.at("algos")) s.algos.push_back(algo::parse_algo_id(a.get<std::string>()));
        if (j.contains("preset")) s.preset = j.at("preset").get<std::string>();
        if (j.contains("base")) s.base = j.at("base");
        if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        s.datasets = j.at("datasets").get<std::vector<std::string>>();
        if (j.contains("axes")) {
            const auto& ax = j.at("axes");
            if (ax.is_object()) {
                for (const auto& [k, v] : ax.items()) s.axes.push_back({k, v.get<std::vector<nlohmann::json>>()});
            } else {
                for (const auto& a : ax)
                    s.axes.push_back({a.at("field").get<std::string>(), a.at("values").get<std::vector<nlohmann::json>>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("sweep", e.what());
    }
    if (s.algos.empty()) throw ConfigError("algos", "at least one algorithm is required");
    if (s.datasets.empty()) throw ConfigError("datasets", "at least one dataset is required");
    if (s.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
    for (const auto& a : s.axes)
        if (a.values.empty()) throw ConfigError(a.field, "axis has no values");
    return s;
}

nlohmann::json to_json(const SweepSpec& s)
{
    nlohmann::json algos = nlohmann::json::array();
    for (auto a : s.algos) algos.push_back(algo::to_string(a));
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : s.axes) axes.push_back({{"field", a.field}, {"values", a.values}});
    return {{"algos", algos}, {"preset", s.preset}, {"base", s.base},
            {"axes", axes},   {"seeds", s.seeds},   {"datasets", s.datasets}};
}

algo::ChoiceConfig resolve_config(algo::AlgoId algo, const std::string& preset, const nlohmann::json& partial)
{
    const algo::ChoiceConfig base = preset.empty() ? algo::defaults_for(algo) : algo::apply_preset(preset, algo);
    return algo::config_from_json(partial, base);
}

std::vector<SweepTrial> expand_sweep(const SweepSpec& spec)
{
    std::size_t grid = 1;
    for (const auto& a : spec.axes) grid *= a.values.size();

    std::vector<SweepTrial> out;
    for (const auto algo_id : spec.algos) {
        const algo::ChoiceConfig base = resolve_config(algo_id, spec.preset, spec.base);
        for (const auto& ds : spec.datasets) {
            for (std::size_t g = 0; g < grid; ++g) {
                algo::ChoiceConfig cfg = base;
                nlohmann::json axis_values = nlohmann::json::object();
                std::size_t rest = g;
                for (auto it = spec.axes.rbegin(); it != spec.axes.rend(); ++it) {
                    const auto& v = it->values[rest % it->values.size()];
                    rest /= it->values.size();
                    cfg = algo::with_field(cfg, it->field, v);
                    axis_values[it->field] = v;
                }
                for (const auto seed : spec.seeds) {
                    SweepTrial t;
                    t.index = out.size();
                    t.algo = algo_id;
                    t.dataset = ds;
                    t.axis_values = axis_values;
                    t.seed = seed;
                    t.config = cfg;
                    t.config.seed = seed;
                    t.config.validate();
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%04zu-%s-s%llu", t.index, algo::to_string(algo_id).c_str(),
                                  static_cast<unsigned long long>(seed));
                    t.name = buf;
                    out.push_back(std::move(t));
                }
            }
        }
    }
    return out;
}

int worker_limit(int fallback)
{
    if (const char* v = std::getenv("OFFBENCH_WORKERS")) {
        char* end = nullptr;
        const long n = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && n > 0) return static_cast<int>(n);
        throw ConfigError("OFFBENCH_WORKERS", std::string("expected a positive integer, got '") + v + "'");
    }
    return std::max(fallback, 1);
}

std::size_t run_processes(const std::vector<std::vector<std::string>>& commands, int workers,
                          const std::function<void(std::size_t, int)>& on_exit)
{
    if (workers < 1) throw ContractViolation("run_processes: workers must be >= 1");
    std::map<pid_t, std::size_t> alive;
    std::size_t next = 0;
    std::size_t failures = 0;
    auto reap_one = [&] {
        int status = 0;
        const pid_t pid = ::waitpid(-1, &status, 0);
        if (pid < 0) throw std::runtime_error("waitpid failed");
        const auto it = alive.find(pid);
        if (it == alive.end()) return;
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        if (code != 0) ++failures;
        const std::size_t idx = it->second;
        alive.erase(it);
        if (on_exit) on_exit(idx, code);
    };
    while (next < commands.size() || !alive.empty()) {
        while (next < commands.size() && static_cast<int>(alive.size()) < workers) {
            std::vector<char*> argv;
            for (const auto& a : commands[next]) argv.push_back(const_cast<char*>(a.c_str()));
            argv.push_back(nullptr);
            pid_t pid = 0;
            if (::posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
                ++failures;
                if (on_exit) on_exit(next, 127);
            } else {
                alive.emplace(pid, next);
            }
            ++next;
        }
        if (!alive.empty()) reap_one();
    }
    return failures;
}

// ---- reports ---------------------------------------------------------------

namespace {

nlohmann::json read_json(const std::filesystem::path& p)
{
    std::ifstream is(p);
    if (!is) throw ReportError("missing " + p.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(p.string() + ": " + e.what());
    }
}

double mean(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

RunRecord load_run(const std::filesystem::path& dir)
{
    const auto cfg = read_json(dir / "config.json");
    const auto sum = read_json(dir / "summary.json");
    RunRecord r;
    r.dir = dir;
    try {
        r.algo = cfg.at("algo").get<std::string>();
        const auto& meta = cfg.at("dataset_meta");
        r.env_id = meta.at("env_id").get<std::string>();
        r.task = r.env_id + "-" + meta.value("kind", std::string("custom"));
        r.config = cfg.at("config");
        r.seed = r.config.at("seed").get<std::uint64_t>();
        r.last_avg = sum.at("last_avg").get<double>();
        r.best_avg = sum.at("best_avg").get<double>();
        r.last_running_avg = sum.at("last_running_avg").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(dir.string() + ": " + e.what());
    }
    return r;
}

std::vector<RunRecord> collect_runs(const std::vector<std::filesystem::path>& roots)
{
    std::vector<std::filesystem::path> dirs;
    for (const auto& root : roots) {
        if (!std::filesystem::is_directory(root)) throw ReportError("not a directory: " + root.string());
        if (std::filesystem::exists(root / "summary.json")) dirs.push_back(root);
        for (const auto& e : std::filesystem::recursive_directory_iterator(root))
            if (e.is_regular_file() && e.path().filename() == "summary.json" && e.path().parent_path() != root)
                dirs.push_back(e.path().parent_path());
    }
    std::sort(dirs.begin(), dirs.end());
    dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
    std::vector<RunRecord> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(load_run(d));
    return out;
}

std::vector<ReportRow> report_rows(const std::vector<RunRecord>& runs)
{
    std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
    for (const auto& r : runs) groups[{r.task, r.algo}].push_back(&r);
    std::vector<ReportRow> rows;
    for (const auto& [key, members] : groups) {
        std::vector<double> last, best, run;
        for (const auto* m : members) {
            last.push_back(m->last_avg);
            best.push_back(m->best_avg);
            run.push_back(m->last_running_avg);
        }
        ReportRow row{key.first, key.second, members.size(), mean(last), mean(best), mean(run), std::nullopt};
        try {
            const auto refs = gen::reference_scores(env::parse_env_id(members.front()->env_id));
            row.normalized = eval::normalized_score(row.last_running_avg, refs.random, refs.expert);
        } catch (const ConfigError&) {
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Format parse_format(const std::string& s)
{
    if (s == "csv") return Format::csv;
    if (s == "md") return Format::md;
    throw ConfigError("format", "expected csv or md, got '" + s + "'");
}

std::string fmt1(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", x);
    std::string s = buf;
    if (s == "-0.0") s = "0.0";
    return s;
}

namespace {

std::string csv_cell(const std::string& c)
{
    if (c.find_first_of(",\"\n") == std::string::npos) return c;
    std::string out = "\"";
    for (char ch : c) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows, Format f)
{
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        if (f == Format::csv) {
            for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
        } else {
            os << '|';
            for (const auto& c : cells) os << ' ' << c << " |";
        }
        os << '\n';
    };
    line(header);
    if (f == Format::md) {
        os << '|';
        for (std::size_t i = 0; i < header.size(); ++i) os << " --- |";
        os << '\n';
    }
    for (const auto& r : rows) line(r);
    return os.str();
}

} // namespace

std::string format_report(const std::vector<ReportRow>& rows, Format f)
{
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows)
        cells.push_back({r.task, r.algo, std::to_string(r.seeds), fmt1(r.last_avg), fmt1(r.best_avg),
                         fmt1(r.last_running_avg), r.normalized ? fmt1(*r.normalized) : ""});
    return render({"task", "algo", "seeds", "last_avg", "best_avg", "last_running_avg", "normalized"}, cells, f);
}

std::vector<AblationRow> ablation_report(const std::vector<RunRecord>& runs, const nlohmann::json& baseline,
                                         const std::string& preset, const std::string& metric)
{
    auto pick = [&](const RunRecord& r) {
        if (metric == "last_avg") return r.last_avg;
        if (metric == "best_avg") return r.best_avg;
        if (metric == "last_running_avg") return r.last_running_avg;
        throw ConfigError("metric", "unknown metric '" + metric + "'");
    };
    (void)pick(RunRecord{});

    std::map<std::string, nlohmann::json> base_json; // per algorithm
    struct Group {
        std::vector<double> base;
        std::map<std::pair<std::string, std::string>, std::vector<double>> variants; // (field, value)
    };
    std::map<std::pair<std::string, std::string>, Group> groups; // (task, algo)

    for (const auto& r : runs) {
        auto it = base_json.find(r.algo);
        if (it == base_json.end()) {
            nlohmann::json b;
            try {
                b = algo::to_json(resolve_config(algo::parse_algo_id(r.algo), preset, baseline));
            } catch (const ConfigError& e) {
                if (e.field() != "preset") throw;
                b = nullptr; // preset of another algorithm: no baseline for these runs
            }
            it = base_json.emplace(r.algo, b).first;
        }
        if (it->second.is_null()) continue;
        std::vector<std::string> diff;
        for (const auto& [k, v] : r.config.items())
            if (k != "seed" && (!it->second.contains(k) || it->second.at(k) != v)) diff.push_back(k);
        Group& g = groups[{r.task, r.algo}];
        if (diff.empty())
            g.base.push_back(pick(r));
        else if (diff.size() == 1)
            g.variants[{diff[0], r.config.at(diff[0]).dump()}].push_back(pick(r));
    }

    std::vector<AblationRow> rows;
    bool any_baseline = false;
    for (const auto& [key, g] : groups) {
        if (g.base.empty()) {
            if (!g.variants.empty())
                throw ReportError("no baseline run for task " + key.first + ", algorithm " + key.second);
            continue;
        }
        any_baseline = true;
        const double b = mean(g.base);
        for (const auto& [fv, vals] : g.variants) {
            AblationRow row;
            row.task = key.first;
            row.algo = key.second;
            row.field = fv.first;
            row.value = fv.second;
            row.seeds = vals.size();
            row.baseline = b;
            row.variant = mean(vals);
            row.delta = row.variant - b;
            if (b != 0.0) row.percent = 100.0 * row.delta / std::abs(b);
            rows.push_back(std::move(row));
        }
    }
    if (!any_baseline) throw ReportError("no run matches the baseline configuration");
    std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
        if (std::abs(a.delta) != std::abs(b.delta)) return std::abs(a.delta) > std::abs(b.delta);
        return std::tie(a.task, a.algo, a.field, a.value) < std::tie(b.task, b.algo, b.field, b.value);
    });
    return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows, Format f)
{
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        cells.push_back({r.task, r.algo, r.field, r.value, std::to_string(r.seeds), fmt1(r.baseline), fmt1(r.variant),
                         fmt1(r.delta), r.percent ? fmt1(*r.percent) : ""});
    }
    return render({"task", "algo", "field", "value", "seeds", "baseline", "variant", "delta", "percent"}, cells, f);
}

} // namespace offbench::bench
