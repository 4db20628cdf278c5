#include <doctest.h>

#include <cstdlib>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "offbench/bench.hpp"
#include "offbench/datagen.hpp"
#include "offbench/errors.hpp"
#include "offbench/trainer.hpp"

using namespace offbench;
namespace fs = std::filesystem;
using nlohmann::json;
using Vec = Eigen::VectorXd;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("offbench_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
}

// A run directory as the trainer writes it, with a chosen last running average.
void fake_run(const fs::path& dir, algo::AlgoId id, const algo::ChoiceConfig& cfg, double metric,
              const std::string& env = "pointmass1d", const std::string& kind = "medium")
{
    const json c{{"algo", algo::to_string(id)},
                 {"config", algo::to_json(cfg)},
                 {"dataset_meta", {{"env_id", env}, {"kind", kind}}}};
    write(dir / "config.json", c.dump());
    write(dir / "summary.json", json{{"last_avg", metric + 1}, {"best_avg", metric + 2}, {"last_running_avg", metric}}.dump());
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(OFFBENCH_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

data::OfflineDataset random_pointmass(std::size_t n, std::uint64_t seed)
{
    return gen::generate_dataset(env::EnvId::pointmass1d, gen::DatasetKind::random, n, seed);
}

algo::ChoiceConfig quick(std::uint64_t seed)
{
    algo::ChoiceConfig c;
    c.hidden_dims = {16, 16};
    c.batch_size = 32;
    c.total_steps = 60;
    c.eval_every = 20;
    c.eval_episodes = 2;
    c.running_window = 2;
    c.seed = seed;
    return c;
}

} // namespace

TEST_SUITE("bench")
{
    TEST_CASE("sweep expansion")
    {
        const json spec = {{"algos", {"iql"}},
                           {"datasets", {"d.jsonl"}},
                           {"axes", {{"expectile", {0.7, 0.9}}, {"policy_lr", {1e-4, 3e-4}}}},
                           {"seeds", {0, 1, 2}}};
        const auto trials = bench::expand_sweep(bench::parse_sweep_spec(spec));
        CHECK(trials.size() == 12);
        std::set<std::string> names;
        for (const auto& t : trials) names.insert(t.name);
        CHECK(names.size() == 12);
        CHECK(trials[0].config.expectile == 0.7);
        CHECK(trials[0].config.policy_lr == 1e-4);
        CHECK(trials[0].seed == 0);
        CHECK(trials[11].config.expectile == 0.9);
        CHECK(trials[11].config.seed == 2);

        const json list_axes = {{"algos", {"cql", "crr"}},
                                {"datasets", {"a", "b"}},
                                {"axes", {{{"field", "double_q"}, {"values", {true, false}}}}}};
        CHECK(bench::expand_sweep(bench::parse_sweep_spec(list_axes)).size() == 8);
        CHECK(bench::parse_sweep_spec(bench::to_json(bench::parse_sweep_spec(spec))).axes.size() == 2);
    }

    TEST_CASE("sweep validation names the field")
    {
        const json bad = {{"algos", {"iql"}}, {"datasets", {"d"}}, {"axes", {{"expectile", {0.5, 1.5}}}}};
        try {
            bench::expand_sweep(bench::parse_sweep_spec(bad));
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "expectile");
        }
        CHECK_THROWS_AS(bench::parse_sweep_spec(json{{"algos", {"iql"}}, {"grid", 1}}), ConfigError);
        CHECK_THROWS_AS(bench::parse_sweep_spec(json{{"algos", {"dqn"}}, {"datasets", {"d"}}}), ConfigError);
    }

    TEST_CASE("worker limit")
    {
        ::unsetenv("OFFBENCH_WORKERS");
        CHECK(bench::worker_limit(3) == 3);
        ::setenv("OFFBENCH_WORKERS", "2", 1);
        CHECK(bench::worker_limit(3) == 2);
        ::setenv("OFFBENCH_WORKERS", "zero", 1);
        CHECK_THROWS_AS(bench::worker_limit(3), ConfigError);
        ::unsetenv("OFFBENCH_WORKERS");
    }

    TEST_CASE("process pool")
    {
        std::vector<std::vector<std::string>> cmds = {{"/bin/true"}, {"/bin/false"}, {"/bin/true"}};
        std::vector<int> codes(3, -1);
        const auto failed = bench::run_processes(cmds, 2, [&](std::size_t i, int c) { codes[i] = c; });
        CHECK(failed == 1);
        CHECK(codes == std::vector<int>{0, 1, 0});
    }

    TEST_CASE("report rows")
    {
        const auto root = scratch("report");
        const auto cfg = algo::defaults_for(algo::AlgoId::bc);
        fake_run(root / "a", algo::AlgoId::bc, cfg, -100.0);
        auto s1 = cfg;
        s1.seed = 1;
        fake_run(root / "b", algo::AlgoId::bc, s1, -200.0);
        fake_run(root / "c", algo::AlgoId::iql, algo::defaults_for(algo::AlgoId::iql), -50.0, "swingup", "expert");
        const auto runs = bench::collect_runs({root});
        REQUIRE(runs.size() == 3);
        const auto rows = bench::report_rows(runs);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].task == "pointmass1d-medium");
        CHECK(rows[0].seeds == 2);
        CHECK(rows[0].last_running_avg == -150.0);
        CHECK(rows[0].last_avg == -149.0);
        CHECK(rows[0].best_avg == -148.0);
        const auto refs = gen::reference_scores(env::EnvId::pointmass1d);
        CHECK(*rows[0].normalized == doctest::Approx(100 * (-150.0 - refs.random) / (refs.expert - refs.random)));
        const std::string csv = bench::format_report(rows, bench::Format::csv);
        CHECK(csv.rfind("task,algo,seeds,last_avg,best_avg,last_running_avg,normalized\n", 0) == 0);
        CHECK(csv.find("pointmass1d-medium,bc,2,-149.0,-148.0,-150.0,") != std::string::npos);
        CHECK(bench::format_report(bench::report_rows(bench::collect_runs({root})), bench::Format::csv) == csv);
        CHECK(bench::format_report(rows, bench::Format::md).find("| --- |") != std::string::npos);
        CHECK_THROWS_AS(bench::parse_format("xlsx"), ConfigError);
        fs::remove(root / "c" / "summary.json");
        write(root / "c" / "summary.json", "{}");
        CHECK_THROWS_AS(bench::collect_runs({root}), ReportError);
        fs::remove_all(root);
    }

    TEST_CASE("fixed decimal formatting")
    {
        CHECK(bench::fmt1(-0.04) == "0.0");
        CHECK(bench::fmt1(12.25) == "12.2");
        CHECK(bench::fmt1(-3.96) == "-4.0");
    }

    TEST_CASE("ablation report")
    {
        const auto root = scratch("ablation");
        const auto base = algo::defaults_for(algo::AlgoId::iql);
        fake_run(root / "base0", algo::AlgoId::iql, base, 100.0);
        auto b1 = base;
        b1.seed = 1;
        fake_run(root / "base1", algo::AlgoId::iql, b1, 100.0);
        fake_run(root / "lr", algo::AlgoId::iql, algo::with_field(base, "policy_lr", 1e-4), 90.0);
        fake_run(root / "ln", algo::AlgoId::iql, algo::with_field(base, "layer_norm", true), 130.0);
        fake_run(root / "same", algo::AlgoId::iql, algo::with_field(base, "expectile", base.expectile), 100.0);
        auto two = algo::with_field(base, "layer_norm", true);
        two.policy_lr = 1e-4;
        fake_run(root / "two", algo::AlgoId::iql, two, 0.0);
        const auto rows = bench::ablation_report(bench::collect_runs({root}), json::object());
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].field == "layer_norm");
        CHECK(rows[0].delta == 30.0);
        CHECK(rows[1].field == "policy_lr");
        CHECK(rows[1].delta == -10.0);
        CHECK(*rows[1].percent == doctest::Approx(-10.0));
        CHECK(rows[1].baseline == 100.0);
        CHECK(rows[1].seeds == 1);

        // A variant equal to the baseline has delta 0.
        const auto lone = scratch("ablation_eq");
        fake_run(lone / "b", algo::AlgoId::iql, base, 7.0);
        fake_run(lone / "v", algo::AlgoId::iql, algo::with_field(base, "expectile", 0.9), 7.0);
        const auto eq = bench::ablation_report(bench::collect_runs({lone}), json::object());
        REQUIRE(eq.size() == 1);
        CHECK(eq[0].delta == 0.0);

        // No baseline anywhere.
        CHECK_THROWS_AS(bench::ablation_report(bench::collect_runs({root}), json{{"expectile", 0.8}}), ReportError);
        CHECK_THROWS_AS(bench::ablation_report(bench::collect_runs({root}), json::object(), "", "median"), ConfigError);
        fs::remove_all(root);
        fs::remove_all(lone);
    }

    TEST_CASE("cli exit codes")
    {
        const auto dir = scratch("cli");
        CHECK(run_cli("") == 2);
        CHECK(run_cli("frobnicate") == 2);
        CHECK(run_cli("train --algo iql --bogus 1") == 2);
        const auto data = dir / "d.jsonl";
        data::save_dataset(data, random_pointmass(2, 0));
        CHECK(run_cli("train --algo iql --data " + data.string() + " --out " + (dir / "r").string() +
                      " --set expectile=1.5") == 2);
        CHECK(run_cli("train --algo iql --data " + (dir / "missing.jsonl").string() + " --out " +
                      (dir / "r").string()) == 1);
        write(dir / "sweep.json", json{{"algos", {"iql"}},
                                       {"datasets", {data.string()}},
                                       {"axes", {{"expectile", {0.7, 0.9}}, {"policy_lr", {1e-4, 3e-4}}}},
                                       {"seeds", {0, 1, 2}}}
                                      .dump());
        const std::string out = (dir / "dry.txt").string();
        std::system((std::string(OFFBENCH_CLI) + " sweep --dry-run --spec " + (dir / "sweep.json").string() + " > " +
                     out).c_str());
        CHECK(slurp(out).rfind("12 trials\n", 0) == 0);
        fs::remove_all(dir);
    }
}

TEST_SUITE("datagen")
{
    TEST_CASE("random datasets")
    {
        for (auto id : {env::EnvId::pointmass1d, env::EnvId::swingup}) {
            const auto ds = gen::generate_dataset(id, gen::DatasetKind::random, 10, 0);
            CHECK(ds.stats().n_traj == 10);
            CHECK(ds.num_transitions() == 2000);
            CHECK(ds.meta().obs_dim == env::obs_dim(id));
            CHECK(ds.meta().extra.at("kind") == "random");
        }
        const auto a = random_pointmass(3, 5);
        const auto b = random_pointmass(3, 5);
        CHECK(a.stats() == b.stats());
        CHECK(!(a.stats() == random_pointmass(3, 6).stats()));
    }

    TEST_CASE("online collection bookkeeping")
    {
        const auto empty = gen::collect_online(env::EnvId::pointmass1d, gen::online_sac_config(0), 0, 0);
        CHECK(empty.buffer.empty());
        CHECK(empty.transitions() == 0);
        CHECK_THROWS_AS(empty.checkpoint(gen::DatasetKind::expert), GenerationError);
        CHECK_THROWS_AS(empty.checkpoint(gen::DatasetKind::medium), GenerationError);
        CHECK_THROWS_AS(gen::generate_dataset(env::EnvId::pointmass1d, gen::DatasetKind::expert, 2, 0, &empty),
                        GenerationError);
        CHECK_THROWS_AS(gen::generate_dataset(env::EnvId::pointmass1d, gen::DatasetKind::medium, 2, 0), GenerationError);

        gen::OnlineOptions opt;
        opt.warmup_steps = 300;
        opt.eval_every = 100000;
        const auto run = gen::collect_online(env::EnvId::pointmass1d, gen::online_sac_config(0), 450, 0, opt);
        CHECK(run.env_steps == 450);
        CHECK(run.transitions() == 450);
        CHECK(run.buffer.size() == 3);
        CHECK(run.buffer.back().length() == 50);
        CHECK(run.expert.has_value());
        CHECK(!run.medium.has_value());
        try {
            run.checkpoint(gen::DatasetKind::medium);
            FAIL("expected a generation error");
        } catch (const GenerationError& e) {
            CHECK(std::string(e.what()).find("score") != std::string::npos);
        }
        const auto replay = gen::generate_dataset(env::EnvId::pointmass1d, gen::DatasetKind::full_replay, 10, 0, &run);
        CHECK(replay.num_transitions() == 450);

        const auto dir = scratch("online");
        gen::save_online_run(dir, run);
        const auto back = gen::load_online_run(dir);
        CHECK(back.transitions() == 450);
        CHECK(back.expert->params.values() == run.expert->params.values());
        fs::remove_all(dir);
    }

    TEST_CASE("reference scores and kinds")
    {
        for (auto id : {env::EnvId::pointmass1d, env::EnvId::swingup}) {
            const auto r = gen::reference_scores(id);
            CHECK(r.expert > r.random);
            CHECK(r.expert <= 0.0);
        }
        for (auto k : {gen::DatasetKind::random, gen::DatasetKind::medium, gen::DatasetKind::expert,
                       gen::DatasetKind::medium_expert, gen::DatasetKind::medium_replay, gen::DatasetKind::full_replay})
            CHECK(gen::parse_dataset_kind(gen::to_string(k)) == k);
        CHECK_THROWS_AS(gen::parse_dataset_kind("mixed"), ConfigError);
    }
}

TEST_SUITE("train")
{
    TEST_CASE("zero steps evaluates once")
    {
        auto c = quick(0);
        c.total_steps = 0;
        const auto r = algo::train(algo::AlgoId::bc, random_pointmass(2, 0), c);
        CHECK(r.steps == 0);
        CHECK(r.series.size() == 1);
        CHECK(r.summary.last_avg == r.summary.best_avg);
        CHECK(r.summary.last_avg == r.summary.last_running_avg);
    }

    TEST_CASE("evaluation cadence")
    {
        auto c = quick(0);
        c.total_steps = 50;
        const auto r = algo::train(algo::AlgoId::bc, random_pointmass(2, 0), c);
        std::vector<long> steps;
        for (const auto& p : r.series.points()) steps.push_back(p.step);
        CHECK(steps == std::vector<long>{0, 20, 40, 50});
    }

    TEST_CASE("runs are byte-identical for a fixed seed")
    {
        const auto ds = random_pointmass(3, 1);
        const auto a = scratch("det_a"), b = scratch("det_b");
        for (auto id : {algo::AlgoId::sac, algo::AlgoId::iql, algo::AlgoId::onestep}) {
            const auto name = algo::to_string(id);
            algo::train(id, ds, quick(3), {a / name});
            algo::train(id, ds, quick(3), {b / name});
            CHECK(slurp(a / name / "losses.csv") == slurp(b / name / "losses.csv"));
            CHECK(slurp(a / name / "eval.csv") == slurp(b / name / "eval.csv"));
            CHECK(slurp(a / name / "policy.ckpt") == slurp(b / name / "policy.ckpt"));
        }
        const auto ra = bench::format_report(bench::report_rows(bench::collect_runs({a})), bench::Format::csv);
        const auto rb = bench::format_report(bench::report_rows(bench::collect_runs({b})), bench::Format::csv);
        CHECK(ra == rb);
        algo::train(algo::AlgoId::sac, ds, quick(4), {a / "other"});
        CHECK(slurp(a / "sac" / "losses.csv") != slurp(a / "other" / "losses.csv"));
        fs::remove_all(a);
        fs::remove_all(b);
    }

    TEST_CASE("non-finite losses abort with a snapshot")
    {
        data::Trajectory t;
        t.states = {Vec::Zero(2), Vec::Zero(2), Vec::Zero(2)};
        t.actions = {Vec::Zero(1), Vec::Zero(1)};
        t.rewards = {1e300, 1e300};
        const data::OfflineDataset ds(data::DatasetMeta{"pointmass1d", 2, 1, {}}, {t});
        const auto dir = scratch("nan");
        CHECK_THROWS_AS(algo::train(algo::AlgoId::sac, ds, quick(0), {dir}), NumericError);
        CHECK(fs::exists(dir / "nan_snapshot" / "snapshot.json"));
        CHECK(fs::exists(dir / "nan_snapshot" / "policy.ckpt"));
        CHECK(!fs::exists(dir / "summary.json"));
        fs::remove_all(dir);
    }

    TEST_CASE("percentile filter and reward normalisation feed training")
    {
        const auto ds = random_pointmass(10, 2);
        auto c = quick(0);
        c.top_fraction = 0.2;
        const auto f = algo::training_dataset(algo::AlgoId::pct_bc, ds, c);
        CHECK(f.stats().n_traj == 2);
        CHECK(f.stats().max_return == ds.stats().max_return);
        CHECK(algo::training_dataset(algo::AlgoId::bc, ds, c).stats() == ds.stats());
        c.reward_norm = true;
        const auto n = algo::training_dataset(algo::AlgoId::iql, ds, c);
        CHECK(n.stats().max_return - n.stats().min_return == doctest::Approx(1000.0));
    }
}
