// offbench: dataset generation, training, evaluation, sweeps and reports.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "offbench/agent.hpp"
#include "offbench/bench.hpp"
#include "offbench/datagen.hpp"
#include "offbench/errors.hpp"
#include "offbench/trainer.hpp"

namespace fs = std::filesystem;
using namespace offbench;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& p)
{
    std::ifstream is(p);
    if (!is) throw ConfigError("path", "cannot open " + p.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(p.string(), e.what());
    }
}

void write_text(const fs::path& p, const std::string& text)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

std::string command_line(int argc, char** argv)
{
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

long default_online_steps(env::EnvId id)
{
    return id == env::EnvId::pointmass1d ? 10000 : 20000;
}

// ---- gen-data ----

struct GenArgs {
    std::string env = "pointmass1d";
    std::string kind = "random";
    std::size_t size = 10;
    std::uint64_t seed = 0;
    std::string out;
    std::string online_dir;
    long online_steps = -1;
    std::uint64_t online_seed = 0;
};

int cmd_gen_data(const GenArgs& a)
{
    const auto id = env::parse_env_id(a.env);
    const auto kind = gen::parse_dataset_kind(a.kind);
    std::optional<gen::OnlineRun> run;
    if (kind != gen::DatasetKind::random) {
        if (!a.online_dir.empty() && fs::exists(fs::path(a.online_dir) / "run.json")) {
            run = gen::load_online_run(a.online_dir);
        } else {
            const long steps = a.online_steps >= 0 ? a.online_steps : default_online_steps(id);
            std::fprintf(stderr, "collecting %ld online steps on %s\n", steps, a.env.c_str());
            run = gen::collect_online(id, gen::online_sac_config(a.online_seed), steps, a.online_seed);
            if (!a.online_dir.empty()) gen::save_online_run(a.online_dir, *run);
        }
    }
    const auto ds = gen::generate_dataset(id, kind, a.size, a.seed, run ? &*run : nullptr);
    data::save_dataset(a.out, ds);
    const auto& st = ds.stats();
    std::printf("%s: %zu trajectories, %zu transitions, returns [%.3f, %.3f]\n", a.out.c_str(), st.n_traj,
                st.n_transitions, st.min_return, st.max_return);
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string algo;
    std::string config;
    std::string preset;
    std::string data;
    std::string out;
    std::vector<std::string> set;
};

int cmd_train(const TrainArgs& a, const std::string& cmdline)
{
    const auto id = algo::parse_algo_id(a.algo);
    const json partial = a.config.empty() ? json::object() : read_json_file(a.config);
    algo::ChoiceConfig cfg = bench::resolve_config(id, a.preset, partial);
    for (const auto& kv : a.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, "expected field=value");
        const std::string field = kv.substr(0, eq);
        const std::string text = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text; // bare strings such as elu or cosine
        }
        cfg = algo::with_field(cfg, field, value);
    }
    cfg.validate();
    const auto ds = data::load_dataset(a.data);
    algo::TrainOptions opt;
    opt.out_dir = a.out;
    opt.provenance = {{"command", cmdline},
                      {"dataset_path", fs::absolute(a.data).string()},
                      {"preset", a.preset},
                      {"config_file", a.config}};
    const auto res = algo::train(id, ds, cfg, opt);
    std::printf("%s: last_avg %.3f best_avg %.3f last_running_avg %.3f\n", a.out.c_str(), res.summary.last_avg,
                res.summary.best_avg, res.summary.last_running_avg);
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string checkpoint;
    std::string env = "pointmass1d";
    int episodes = 10;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a)
{
    if (a.episodes < 1) throw ConfigError("episodes", "must be >= 1");
    const auto id = env::parse_env_id(a.env);
    const auto policy = algo::load_policy(a.checkpoint);
    const auto r = eval::evaluate(policy, id, a.episodes, a.seed);
    const auto refs = gen::reference_scores(id);
    const json out{{"env", a.env},
                   {"episodes", a.episodes},
                   {"mean_return", r.mean},
                   {"normalized", eval::normalized_score(r.mean, refs.random, refs.expert)},
                   {"returns", r.returns}};
    std::cout << out.dump() << '\n';
    return 0;
}

// ---- sweep ----

struct SweepArgs {
    std::string spec;
    std::string out;
    bool dry_run = false;
};

int cmd_sweep(const SweepArgs& a)
{
    const auto spec = bench::parse_sweep_spec(read_json_file(a.spec));
    const auto trials = bench::expand_sweep(spec);
    std::printf("%zu trials\n", trials.size());
    if (a.dry_run) {
        for (const auto& t : trials)
            std::printf("%s %s %s %s\n", t.name.c_str(), algo::to_string(t.algo).c_str(), t.dataset.c_str(),
                        t.axis_values.dump().c_str());
        return 0;
    }
    const fs::path out = a.out;
    const fs::path self = fs::read_symlink("/proc/self/exe");
    json manifest{{"spec", bench::to_json(spec)}, {"trials", json::array()}};
    std::vector<std::vector<std::string>> commands;
    std::vector<std::size_t> slot; // manifest index of each command
    for (const auto& t : trials) {
        const fs::path dir = out / "trials" / t.name;
        fs::create_directories(dir);
        const fs::path cfg_path = dir / "trial_config.json";
        write_text(cfg_path, algo::to_json(t.config).dump(2) + "\n");
        const bool done = fs::exists(dir / "summary.json");
        manifest["trials"].push_back({{"name", t.name},
                                      {"algo", algo::to_string(t.algo)},
                                      {"dataset", t.dataset},
                                      {"axes", t.axis_values},
                                      {"seed", t.seed},
                                      {"status", done ? "done" : "pending"}});
        if (done) continue;
        commands.push_back({self.string(), "train", "--algo", algo::to_string(t.algo), "--config", cfg_path.string(),
                            "--data", t.dataset, "--out", dir.string()});
        slot.push_back(t.index);
    }
    const fs::path manifest_path = out / "manifest.json";
    write_text(manifest_path, manifest.dump(2) + "\n");
    const int workers = bench::worker_limit(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    const std::size_t failed = bench::run_processes(commands, workers, [&](std::size_t i, int code) {
        manifest["trials"][slot[i]]["status"] = code == 0 ? "done" : "failed";
        manifest["trials"][slot[i]]["exit_code"] = code;
        write_text(manifest_path, manifest.dump(2) + "\n");
    });
    std::printf("%zu/%zu trials failed\n", failed, commands.size());
    return failed == 0 ? 0 : 1;
}

// ---- report ----

struct ReportArgs {
    std::vector<std::string> roots;
    std::string format = "csv";
    std::string out;
    std::string ablation;
    std::string preset;
    std::string metric = "last_running_avg";
};

int cmd_report(const ReportArgs& a)
{
    const auto fmt = bench::parse_format(a.format);
    std::vector<fs::path> roots(a.roots.begin(), a.roots.end());
    const auto runs = bench::collect_runs(roots);
    if (runs.empty()) throw ReportError("no completed runs found");
    std::string text;
    if (a.ablation.empty()) {
        text = bench::format_report(bench::report_rows(runs), fmt);
    } else {
        const auto rows = bench::ablation_report(runs, read_json_file(a.ablation), a.preset, a.metric);
        text = bench::format_ablation(rows, fmt);
    }
    if (a.out.empty())
        std::cout << text;
    else
        write_text(a.out, text);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"offbench: offline RL implementation-choice benchmark"};
    app.require_subcommand(1);

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    gen->add_option("--env", gen_args.env)->required();
    gen->add_option("--kind", gen_args.kind)->required();
    gen->add_option("--size", gen_args.size, "trajectory count")->required();
    gen->add_option("--seed", gen_args.seed);
    gen->add_option("--out", gen_args.out)->required();
    gen->add_option("--online-dir", gen_args.online_dir, "cache directory of the online run");
    gen->add_option("--online-steps", gen_args.online_steps);
    gen->add_option("--online-seed", gen_args.online_seed);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train one algorithm on a dataset");
    train->add_option("--algo", train_args.algo)->required();
    train->add_option("--config", train_args.config, "partial ChoiceConfig JSON");
    train->add_option("--preset", train_args.preset);
    train->add_option("--data", train_args.data)->required();
    train->add_option("--out", train_args.out)->required();
    train->add_option("--set", train_args.set, "field=value override");

    EvalArgs eval_args;
    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
    evalc->add_option("--checkpoint", eval_args.checkpoint)->required();
    evalc->add_option("--env", eval_args.env)->required();
    evalc->add_option("--episodes", eval_args.episodes);
    evalc->add_option("--seed", eval_args.seed);

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "run a configuration grid");
    sweep->add_option("--spec", sweep_args.spec)->required();
    sweep->add_option("--out", sweep_args.out);
    sweep->add_flag("--dry-run", sweep_args.dry_run);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "aggregate run directories");
    report->add_option("roots", report_args.roots)->required();
    report->add_option("--format", report_args.format);
    report->add_option("--out", report_args.out);
    report->add_option("--ablation", report_args.ablation, "baseline config JSON");
    report->add_option("--preset", report_args.preset);
    report->add_option("--metric", report_args.metric);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (*gen) return cmd_gen_data(gen_args);
        if (*train) return cmd_train(train_args, command_line(argc, argv));
        if (*evalc) return cmd_eval(eval_args);
        if (*sweep) {
            if (!sweep_args.dry_run && sweep_args.out.empty()) throw ConfigError("--out", "required unless --dry-run");
            return cmd_sweep(sweep_args);
        }
        if (*report) return cmd_report(report_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
