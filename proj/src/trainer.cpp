#include "offbench/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "offbench/errors.hpp"

namespace offbench::algo {

data::OfflineDataset training_dataset(AlgoId algo, const data::OfflineDataset& ds, const ChoiceConfig& cfg)
{
    data::OfflineDataset out = algo == AlgoId::pct_bc ? data::top_fraction(ds, cfg.top_fraction) : ds;
    if (cfg.reward_norm) out = data::normalize_rewards(out);
    return out;
}

namespace {

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t eval_seed(std::uint64_t seed)
{
    return seed * 1000003ULL + 424242ULL;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

} // namespace

TrainResult train(AlgoId algo, const data::OfflineDataset& ds, const ChoiceConfig& cfg, const TrainOptions& options)
{
    cfg.validate();
    const env::EnvId env_id = env::parse_env_id(ds.meta().env_id);
    const data::OfflineDataset train_ds = training_dataset(algo, ds, cfg);
    auto agent = make_agent(algo, ds.meta().obs_dim, ds.meta().act_dim, cfg);
    const auto names = agent->loss_names();
    const bool files = !options.out_dir.empty();

    std::ofstream loss_csv;
    if (files) {
        std::filesystem::create_directories(options.out_dir);
        nlohmann::json meta = ds.meta().extra;
        meta["env_id"] = ds.meta().env_id;
        meta["obs_dim"] = ds.meta().obs_dim;
        meta["act_dim"] = ds.meta().act_dim;
        nlohmann::json j = options.provenance;
        j["algo"] = to_string(algo);
        j["config"] = to_json(cfg);
        j["dataset_meta"] = meta;
        j["dataset_stats"] = {{"n_traj", ds.stats().n_traj},
                              {"n_transitions", ds.stats().n_transitions},
                              {"max_return", ds.stats().max_return},
                              {"min_return", ds.stats().min_return}};
        write_json(options.out_dir / "config.json", j);
        loss_csv.open(options.out_dir / "losses.csv");
        if (!loss_csv) throw std::runtime_error("cannot write losses.csv");
        loss_csv << "step";
        for (const auto& n : names) loss_csv << ',' << n;
        loss_csv << ",policy_lr\n";
    }

    TrainResult res{eval::EvalSeries(cfg.running_window), {}, 0};
    const std::uint64_t eseed = eval_seed(cfg.seed);
    auto run_eval = [&](long step) {
        const auto r = eval::evaluate(agent->policy(), env_id, cfg.eval_episodes, eseed);
        res.series.add(step, r.returns);
    };

    Rng batch_rng = make_rng(cfg.seed, 1);
    run_eval(0);
    for (long step = 1; step <= cfg.total_steps; ++step) {
        const double lr = agent->policy_lr();
        const LossLog log = agent->step(train_ds, batch_rng);
        std::map<std::string, double> row(log.begin(), log.end());
        bool finite = true;
        for (const auto& [k, v] : log) finite = finite && std::isfinite(v);
        if (files) {
            loss_csv << step;
            for (const auto& n : names) {
                loss_csv << ',';
                if (auto it = row.find(n); it != row.end()) loss_csv << fmt17(it->second);
            }
            loss_csv << ',' << fmt17(lr) << '\n';
        }
        if (!finite) {
            std::string detail;
            for (const auto& [k, v] : log) detail += " " + k + "=" + fmt17(v);
            if (files) {
                const auto snap = options.out_dir / "nan_snapshot";
                std::filesystem::create_directories(snap);
                agent->save(snap);
                nlohmann::json j{{"step", step}, {"losses", nlohmann::json::object()}};
                for (const auto& [k, v] : log) j["losses"][k] = fmt17(v);
                write_json(snap / "snapshot.json", j);
            }
            throw NumericError("non-finite loss at step " + std::to_string(step) + ":" + detail);
        }
        res.steps = step;
        if (step % cfg.eval_every == 0 || step == cfg.total_steps) run_eval(step);
    }

    res.summary = eval::summarize(res.series);
    if (files) {
        loss_csv.close();
        eval::write_eval_csv(options.out_dir / "eval.csv", res.series);
        agent->save(options.out_dir);
        write_json(options.out_dir / "summary.json", {{"last_avg", res.summary.last_avg},
                                                      {"best_avg", res.summary.best_avg},
                                                      {"last_running_avg", res.summary.last_running_avg},
                                                      {"window", cfg.running_window},
                                                      {"steps", res.steps}});
    }
    return res;
}

} // namespace offbench::algo
