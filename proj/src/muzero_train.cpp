#include <fstream>

#include "offbench/agent.hpp"
#include "offbench/checkpoint.hpp"
#include "offbench/errors.hpp"
#include "offbench/muzero.hpp"

namespace offbench::mz {

MuZeroState make_muzero_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    MuZeroState st;
    st.cfg = cfg;
    st.model = WorldModel(obs_dim, act_dim, cfg, cfg.seed);
    st.target = st.model;
    const long horizon = std::max(cfg.total_steps, 1L);
    st.opt_h = nn::AdamState::create(st.model.h.size(), cfg.policy_lr, cfg.lr_schedule, horizon);
    st.opt_g = nn::AdamState::create(st.model.g.size(), cfg.policy_lr, cfg.lr_schedule, horizon);
    st.opt_f = nn::AdamState::create(st.model.f.size(), cfg.policy_lr, cfg.lr_schedule, horizon);
    st.rng = make_rng(cfg.seed, 11);
    return st;
}

std::vector<std::pair<std::string, double>> muzero_update(MuZeroState& st, const data::OfflineDataset& ds,
                                                          Rng& batch_rng)
{
    const UnrollBatch batch = make_unroll_batch(ds, st.target, st.cfg, st.cfg.batch_size, batch_rng, st.rng);
    const UnrollLoss loss = unroll_loss(st.model, batch);
    nn::adam_step(st.opt_h, st.model.h, loss.grad.h);
    nn::adam_step(st.opt_g, st.model.g, loss.grad.g);
    nn::adam_step(st.opt_f, st.model.f, loss.grad.f);
    ++st.step;
    const nn::TargetUpdate hard{nn::TargetUpdate::Mode::hard, 1.0, st.cfg.mz_target_period};
    nn::target_update(st.target.h, st.model.h, hard, st.step);
    nn::target_update(st.target.g, st.model.g, hard, st.step);
    nn::target_update(st.target.f, st.model.f, hard, st.step);
    return {{"loss", loss.total}, {"policy_loss", loss.policy}, {"value_loss", loss.value}, {"reward_loss", loss.reward}};
}

eval::Policy search_policy(std::shared_ptr<const WorldModel> model, const SearchConfig& cfg, std::uint64_t seed)
{
    auto rng = std::make_shared<Rng>(make_rng(seed, 77));
    return [model, cfg, rng](const Vec& obs) { return sampled_mcts(*model, obs, cfg, *rng).best_action(); };
}

namespace {

nlohmann::json search_json(const SearchConfig& c)
{
    return {{"num_samples", c.num_samples}, {"simulations", c.simulations}, {"c1", c.c1},
            {"c2", c.c2},                   {"discount", c.discount},       {"root_noise", c.root_noise}};
}

} // namespace

void save_world_model(const std::filesystem::path& dir, const WorldModel& m, const SearchConfig& cfg)
{
    nn::save_checkpoint(dir / "policy.ckpt", m.h,
                        {{"kind", "muzero"},
                         {"act_dim", m.act},
                         {"latent_dim", m.latent},
                         {"transition", "transition.ckpt"},
                         {"prediction", "prediction.ckpt"},
                         {"search", search_json(cfg)}});
    nn::save_checkpoint(dir / "transition.ckpt", m.g, {{"kind", "muzero_transition"}});
    nn::save_checkpoint(dir / "prediction.ckpt", m.f, {{"kind", "muzero_prediction"}});
}

eval::Policy load_muzero_policy(const std::filesystem::path& checkpoint)
{
    auto enc = nn::load_checkpoint(checkpoint);
    const auto& x = enc.extra;
    if (x.value("kind", "") != "muzero") throw SchemaError(checkpoint.string() + " is not a MuZero checkpoint");
    const auto dir = checkpoint.parent_path();
    auto m = std::make_shared<WorldModel>();
    m->h = std::move(enc.params);
    m->g = nn::load_checkpoint(dir / x.at("transition").get<std::string>()).params;
    m->f = nn::load_checkpoint(dir / x.at("prediction").get<std::string>()).params;
    m->obs = m->h.spec().input_dim;
    m->act = x.at("act_dim").get<int>();
    m->latent = x.at("latent_dim").get<int>();
    const auto& s = x.at("search");
    SearchConfig cfg;
    cfg.num_samples = s.at("num_samples").get<int>();
    cfg.simulations = s.at("simulations").get<int>();
    cfg.c1 = s.at("c1").get<double>();
    cfg.c2 = s.at("c2").get<double>();
    cfg.discount = s.at("discount").get<double>();
    cfg.root_noise = s.at("root_noise").get<bool>();
    return search_policy(m, cfg, 0);
}

namespace {

class MuZeroAgent final : public algo::Agent {
public:
    MuZeroAgent(int obs, int act, const ChoiceConfig& cfg) : st_(make_muzero_state(obs, act, cfg)) {}
    std::vector<std::string> loss_names() const override
    {
        return {"loss", "policy_loss", "value_loss", "reward_loss"};
    }
    algo::LossLog step(const data::OfflineDataset& ds, Rng& rng) override { return muzero_update(st_, ds, rng); }
    eval::Policy policy() const override
    {
        return search_policy(std::make_shared<const WorldModel>(st_.model), search_config(st_.cfg), st_.cfg.seed);
    }
    double policy_lr() const override { return st_.opt_f.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        save_world_model(dir, st_.model, search_config(st_.cfg));
    }

private:
    MuZeroState st_;
};

} // namespace

std::unique_ptr<algo::Agent> make_muzero_agent(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    return std::make_unique<MuZeroAgent>(obs_dim, act_dim, cfg);
}

} // namespace offbench::mz
