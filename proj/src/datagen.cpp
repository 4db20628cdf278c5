#include "offbench/datagen.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "offbench/errors.hpp"
#include "offbench/eval.hpp"

namespace offbench::gen {

using algo::Mat;
using algo::Vec;

std::string to_string(DatasetKind k)
{
    switch (k) {
    case DatasetKind::random: return "random";
    case DatasetKind::medium: return "medium";
    case DatasetKind::expert: return "expert";
    case DatasetKind::medium_expert: return "medium_expert";
    case DatasetKind::medium_replay: return "medium_replay";
    case DatasetKind::full_replay: return "full_replay";
    }
    return "?";
}

DatasetKind parse_dataset_kind(std::string_view s)
{
    for (auto k : {DatasetKind::random, DatasetKind::medium, DatasetKind::expert, DatasetKind::medium_expert,
                   DatasetKind::medium_replay, DatasetKind::full_replay})
        if (s == to_string(k)) return k;
    throw ConfigError("kind", "unknown dataset kind '" + std::string(s) + "'");
}

ReferenceScores reference_scores(env::EnvId id)
{
    // Measured by offbench-refs: seed 0, 100k online steps, 100 evaluation episodes.
    switch (id) {
    case env::EnvId::pointmass1d: return {-279.463224, -5.392774};
    case env::EnvId::swingup: return {-1248.072111, -145.931451};
    }
    throw ContractViolation("reference_scores: unknown environment");
}

algo::ChoiceConfig online_sac_config(std::uint64_t seed)
{
    algo::ChoiceConfig c = algo::defaults_for(algo::AlgoId::sac);
    c.hidden_dims = {64, 64};
    c.batch_size = 128;
    c.lr_schedule = nn::LrSchedule::constant;
    c.policy_lr = 1e-3;
    c.value_lr = 1e-3;
    c.seed = seed;
    return c;
}

const algo::Actor& OnlineRun::checkpoint(DatasetKind kind) const
{
    const bool want_medium = kind == DatasetKind::medium || kind == DatasetKind::medium_expert ||
                             kind == DatasetKind::medium_replay;
    if (want_medium && !medium)
        throw GenerationError("medium checkpoint missing: best normalized score reached was " +
                              std::to_string(best_score) + " after " + std::to_string(env_steps) + " steps");
    if (!expert) throw GenerationError("no policy checkpoint: the online run took no steps");
    return want_medium ? *medium : *expert;
}

std::size_t OnlineRun::transitions() const
{
    std::size_t n = 0;
    for (const auto& t : buffer) n += t.length();
    return n;
}

namespace {

// Flat view over the chronological buffer for uniform transition sampling.
struct Replay {
    std::vector<Vec> s, a, s2;
    std::vector<double> r;

    void push(const Vec& st, const Vec& ac, double rew, const Vec& next)
    {
        s.push_back(st);
        a.push_back(ac);
        r.push_back(rew);
        s2.push_back(next);
    }

    data::Batch sample(int n, Rng& rng) const
    {
        std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
        data::Batch b;
        b.s.resize(s[0].size(), n);
        b.a.resize(a[0].size(), n);
        b.r.resize(n);
        b.s2.resize(s[0].size(), n);
        b.done = Vec::Zero(n); // horizon truncation never terminates
        b.a2 = Mat::Zero(a[0].size(), n);
        b.a2_valid = Vec::Zero(n);
        for (int j = 0; j < n; ++j) {
            const std::size_t i = pick(rng);
            b.s.col(j) = s[i];
            b.a.col(j) = a[i];
            b.r[j] = r[i];
            b.s2.col(j) = s2[i];
        }
        return b;
    }
};

} // namespace

OnlineRun collect_online(env::EnvId env_id, const algo::ChoiceConfig& sac_config, long total_steps, std::uint64_t seed,
                         const OnlineOptions& options)
{
    if (total_steps < 0) throw ConfigError("total_steps", "must be >= 0");
    algo::ChoiceConfig cfg = sac_config;
    cfg.seed = seed;
    cfg.total_steps = std::max(total_steps, 1L);
    const int od = env::obs_dim(env_id);
    const int ad = env::act_dim(env_id);
    algo::SacState st = algo::make_sac_state(od, ad, cfg);
    const ReferenceScores refs = reference_scores(env_id);

    OnlineRun run;
    run.env = env_id;
    run.seed = seed;
    run.best_score = -std::numeric_limits<double>::infinity();
    Rng env_rng = make_rng(seed, 21);
    Rng act_rng = make_rng(seed, 22);
    Rng batch_rng = make_rng(seed, 23);
    Replay replay;

    env::EnvState state = env::env_reset(env_id, env_rng);
    data::Trajectory current;
    current.states.push_back(env::observe(state));
    for (long step = 1; step <= total_steps; ++step) {
        const Vec obs = current.states.back();
        Vec a;
        if (step <= options.warmup_steps) {
            a = uniform(act_rng, ad, 1, -1.0, 1.0).col(0);
        } else {
            const auto f = st.actor.forward(obs);
            a = policy::sample(st.actor.head(f, 0), act_rng);
        }
        const auto res = env::env_step(state, a);
        const Vec next = env::observe(res.next);
        current.actions.push_back(a);
        current.rewards.push_back(res.reward);
        current.states.push_back(next);
        replay.push(obs, a, res.reward, next);
        state = res.next;
        ++run.env_steps;
        if (res.done) {
            run.buffer.push_back(std::move(current));
            current = data::Trajectory{};
            state = env::env_reset(env_id, env_rng);
            current.states.push_back(env::observe(state));
        }
        if (step > options.warmup_steps) algo::sac_update(st, replay.sample(cfg.batch_size, batch_rng));

        if (step % options.eval_every == 0) {
            const auto r = eval::evaluate([&](const Vec& o) { return st.actor.act(o); }, env_id,
                                          options.eval_episodes, seed * 1000003ULL + 99);
            const double score = eval::normalized_score(r.mean, refs.random, refs.expert);
            run.evaluations.emplace_back(step, r.mean);
            run.best_score = std::max(run.best_score, score);
            if (!run.medium && score >= options.medium_threshold) {
                run.medium = st.actor;
                run.medium_step = step;
                run.medium_buffer_trajectories = run.buffer.size();
            }
        }
    }
    if (!current.rewards.empty()) run.buffer.push_back(std::move(current));
    if (total_steps > 0) run.expert = st.actor;
    return run;
}

void save_online_run(const std::filesystem::path& dir, const OnlineRun& run)
{
    std::filesystem::create_directories(dir);
    if (run.medium) run.medium->save(dir / "medium.ckpt");
    if (run.expert) run.expert->save(dir / "expert.ckpt");
    if (!run.buffer.empty()) {
        data::DatasetMeta meta{env::to_string(run.env), env::obs_dim(run.env), env::act_dim(run.env), {}};
        data::save_dataset(dir / "replay.jsonl", data::OfflineDataset(meta, run.buffer));
    }
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& [s, m] : run.evaluations) evals.push_back({s, m});
    const nlohmann::json j{{"env_id", env::to_string(run.env)},
                           {"seed", run.seed},
                           {"env_steps", run.env_steps},
                           {"medium_step", run.medium_step},
                           {"medium_buffer_trajectories", run.medium_buffer_trajectories},
                           {"best_score", std::isfinite(run.best_score) ? nlohmann::json(run.best_score) : nlohmann::json()},
                           {"evaluations", evals}};
    std::ofstream os(dir / "run.json");
    os << j.dump(2) << '\n';
}

OnlineRun load_online_run(const std::filesystem::path& dir)
{
    std::ifstream is(dir / "run.json");
    if (!is) throw GenerationError("no online run in " + dir.string());
    const auto j = nlohmann::json::parse(is);
    OnlineRun run;
    run.env = env::parse_env_id(j.at("env_id").get<std::string>());
    run.seed = j.at("seed").get<std::uint64_t>();
    run.env_steps = j.at("env_steps").get<long>();
    run.medium_step = j.at("medium_step").get<long>();
    run.medium_buffer_trajectories = j.at("medium_buffer_trajectories").get<std::size_t>();
    // No evaluation yet is stored as null.
    run.best_score = j.at("best_score").is_null() ? -std::numeric_limits<double>::infinity()
                                                  : j.at("best_score").get<double>();
    for (const auto& e : j.at("evaluations")) run.evaluations.emplace_back(e[0].get<long>(), e[1].get<double>());
    if (std::filesystem::exists(dir / "medium.ckpt")) run.medium = algo::Actor::load(dir / "medium.ckpt");
    if (std::filesystem::exists(dir / "expert.ckpt")) run.expert = algo::Actor::load(dir / "expert.ckpt");
    if (std::filesystem::exists(dir / "replay.jsonl"))
        run.buffer = data::load_dataset(dir / "replay.jsonl").trajectories();
    return run;
}

std::vector<data::Trajectory> rollouts(env::EnvId env_id, const algo::Actor* actor, std::size_t episodes, Rng& rng)
{
    std::vector<data::Trajectory> out;
    out.reserve(episodes);
    const int ad = env::act_dim(env_id);
    for (std::size_t e = 0; e < episodes; ++e) {
        env::EnvState state = env::env_reset(env_id, rng);
        data::Trajectory t;
        t.states.push_back(env::observe(state));
        bool done = false;
        while (!done) {
            Vec a;
            if (actor) {
                const auto f = actor->forward(t.states.back());
                a = policy::sample(actor->head(f, 0), rng);
            } else {
                a = uniform(rng, ad, 1, -1.0, 1.0).col(0);
            }
            const auto res = env::env_step(state, a);
            t.actions.push_back(a);
            t.rewards.push_back(res.reward);
            t.states.push_back(env::observe(res.next));
            state = res.next;
            done = res.done;
        }
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

std::vector<data::Trajectory> downsample(const std::vector<data::Trajectory>& trajs, std::size_t size)
{
    if (trajs.size() <= size) return trajs;
    std::vector<data::Trajectory> out;
    out.reserve(size);
    // Evenly spaced picks that always include the first and the last trajectory.
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t idx =
            size == 1 ? trajs.size() - 1 : static_cast<std::size_t>(std::llround(static_cast<double>(i) *
                                                                                  static_cast<double>(trajs.size() - 1) /
                                                                                  static_cast<double>(size - 1)));
        out.push_back(trajs[idx]);
    }
    return out;
}

} // namespace

data::OfflineDataset generate_dataset(env::EnvId env_id, DatasetKind kind, std::size_t size, std::uint64_t seed,
                                      const OnlineRun* run)
{
    if (size < 1) throw ConfigError("size", "must be >= 1");
    if (kind != DatasetKind::random && run == nullptr)
        throw GenerationError("dataset kind '" + to_string(kind) + "' needs an online run");
    if (run && run->env != env_id) throw GenerationError("online run belongs to another environment");

    Rng rng = make_rng(seed, 31);
    std::vector<data::Trajectory> trajs;
    switch (kind) {
    case DatasetKind::random:
        trajs = rollouts(env_id, nullptr, size, rng);
        break;
    case DatasetKind::medium:
    case DatasetKind::expert:
        trajs = rollouts(env_id, &run->checkpoint(kind), size, rng);
        break;
    case DatasetKind::medium_expert: {
        const std::size_t n_med = (size + 1) / 2;
        trajs = rollouts(env_id, &run->checkpoint(DatasetKind::medium), n_med, rng);
        auto ex = rollouts(env_id, &run->checkpoint(DatasetKind::expert), size - n_med, rng);
        trajs.insert(trajs.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
        break;
    }
    case DatasetKind::medium_replay: {
        (void)run->checkpoint(kind);
        const std::vector<data::Trajectory> prefix(
            run->buffer.begin(),
            run->buffer.begin() + static_cast<std::ptrdiff_t>(std::min(run->medium_buffer_trajectories, run->buffer.size())));
        if (prefix.empty()) throw GenerationError("medium_replay: empty buffer prefix");
        trajs = downsample(prefix, size);
        break;
    }
    case DatasetKind::full_replay:
        if (run->buffer.empty()) throw GenerationError("full_replay: the online run buffer is empty");
        trajs = downsample(run->buffer, size);
        break;
    }

    data::DatasetMeta meta{env::to_string(env_id), env::obs_dim(env_id), env::act_dim(env_id), {}};
    meta.extra["kind"] = to_string(kind);
    meta.extra["seed"] = seed;
    meta.extra["size"] = size;
    meta.extra["generator"] = "offbench-envlab/1";
    if (run) {
        meta.extra["online_seed"] = run->seed;
        meta.extra["online_steps"] = run->env_steps;
        meta.extra["medium_step"] = run->medium_step;
    }
    return data::OfflineDataset(std::move(meta), std::move(trajs));
}

} // namespace offbench::gen
