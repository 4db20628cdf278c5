#include "offbench/agent.hpp"

#include <fstream>

#include "offbench/checkpoint.hpp"
#include "offbench/errors.hpp"
#include "offbench/muzero.hpp"

namespace offbench::algo {

namespace {

eval::Policy actor_policy(const Actor& actor)
{
    return [&actor](const Vec& obs) { return actor.act(obs); };
}

void save_critics(const CriticPair& c, const std::filesystem::path& dir)
{
    for (int i = 0; i < c.count(); ++i)
        nn::save_checkpoint(dir / ("critic" + std::to_string(i + 1) + ".ckpt"), c.online[i], {{"kind", "critic"}});
}

class BcAgent final : public Agent {
public:
    BcAgent(int obs, int act, const ChoiceConfig& cfg) : st_(make_bc_state(obs, act, cfg)) {}
    std::vector<std::string> loss_names() const override { return {"actor_loss"}; }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        return bc_update(st_, data::sample_batch(ds, st_.cfg.batch_size, rng));
    }
    eval::Policy policy() const override { return actor_policy(st_.actor); }
    double policy_lr() const override { return st_.actor_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override { st_.actor.save(dir / "policy.ckpt"); }

private:
    BcState st_;
};

class SacAgent final : public Agent {
public:
    SacAgent(int obs, int act, const ChoiceConfig& cfg, bool conservative)
        : st_(make_sac_state(obs, act, cfg)), conservative_(conservative)
    {
    }
    std::vector<std::string> loss_names() const override
    {
        std::vector<std::string> n{"critic_loss", "actor_loss", "alpha", "entropy"};
        if (conservative_) n.push_back("cql_penalty");
        return n;
    }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        const auto b = data::sample_batch(ds, st_.cfg.batch_size, rng);
        return conservative_ ? cql_update(st_, b) : sac_update(st_, b);
    }
    eval::Policy policy() const override { return actor_policy(st_.actor); }
    double policy_lr() const override { return st_.actor_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        st_.actor.save(dir / "policy.ckpt");
        save_critics(st_.critics, dir);
    }

private:
    SacState st_;
    bool conservative_;
};

class Td3bcAgent final : public Agent {
public:
    Td3bcAgent(int obs, int act, const ChoiceConfig& cfg) : st_(make_td3bc_state(obs, act, cfg)) {}
    std::vector<std::string> loss_names() const override { return {"critic_loss", "actor_loss", "lambda"}; }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        return td3bc_update(st_, data::sample_batch(ds, st_.cfg.batch_size, rng));
    }
    eval::Policy policy() const override { return actor_policy(st_.actor); }
    double policy_lr() const override { return st_.actor_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        st_.actor.save(dir / "policy.ckpt");
        save_critics(st_.critics, dir);
    }

private:
    Td3bcState st_;
};

class CrrAgent final : public Agent {
public:
    CrrAgent(int obs, int act, const ChoiceConfig& cfg) : st_(make_crr_state(obs, act, cfg)) {}
    std::vector<std::string> loss_names() const override { return {"critic_loss", "actor_loss", "mean_weight"}; }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        return crr_update(st_, data::sample_batch(ds, st_.cfg.batch_size, rng));
    }
    eval::Policy policy() const override { return actor_policy(st_.actor); }
    double policy_lr() const override { return st_.actor_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        st_.actor.save(dir / "policy.ckpt");
        save_critics(st_.critics, dir);
    }

private:
    CrrState st_;
};

class IqlAgent final : public Agent {
public:
    IqlAgent(int obs, int act, const ChoiceConfig& cfg) : st_(make_iql_state(obs, act, cfg)) {}
    std::vector<std::string> loss_names() const override
    {
        return {"actor_loss", "mean_weight", "value_loss", "critic_loss"};
    }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        const auto b = data::sample_batch(ds, st_.cfg.batch_size, rng);
        if (st_.cfg.iql_joint) return iql_update(st_, b, true, true);
        const bool first_half = st_.step < st_.cfg.total_steps / 2;
        return iql_update(st_, b, first_half, !first_half);
    }
    eval::Policy policy() const override { return actor_policy(st_.actor); }
    double policy_lr() const override { return st_.actor_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        st_.actor.save(dir / "policy.ckpt");
        save_critics(st_.critics, dir);
        nn::save_checkpoint(dir / "value.ckpt", st_.value, {{"kind", "value"}});
    }

private:
    IqlState st_;
};

class OnestepAgent final : public Agent {
public:
    OnestepAgent(int obs, int act, const ChoiceConfig& cfg)
        : third_(cfg.total_steps / 3), st_(make_onestep_state(obs, act, cfg, cfg.total_steps - 2 * third_))
    {
    }
    std::vector<std::string> loss_names() const override
    {
        return {"behavior_loss", "critic_loss", "actor_loss", "mean_weight"};
    }
    LossLog step(const data::OfflineDataset& ds, Rng& rng) override
    {
        if (st_.stage == OnestepStage::behavior && st_.step >= third_) onestep_advance(st_, OnestepStage::critic);
        if (st_.stage == OnestepStage::critic && st_.step >= 2 * third_) onestep_advance(st_, OnestepStage::improve);
        switch (st_.stage) {
        case OnestepStage::behavior:
            return onestep_behavior_update(st_, data::sample_batch(ds, st_.cfg.batch_size, rng));
        case OnestepStage::critic:
            return onestep_critic_update(st_,
                                         data::sample_batch(ds, st_.cfg.batch_size, rng, data::BatchView::sarsa));
        case OnestepStage::improve:
            break;
        }
        return onestep_improve_update(st_, data::sample_batch(ds, st_.cfg.batch_size, rng));
    }
    eval::Policy policy() const override
    {
        // Before the improvement stage the fitted behavior model is the best available policy.
        return st_.stage == OnestepStage::improve ? actor_policy(st_.policy) : actor_policy(st_.behavior);
    }
    double policy_lr() const override { return st_.policy_opt.effective_lr(); }
    void save(const std::filesystem::path& dir) const override
    {
        (st_.stage == OnestepStage::improve ? st_.policy : st_.behavior).save(dir / "policy.ckpt");
        st_.behavior.save(dir / "behavior.ckpt");
        save_critics(st_.critics, dir);
    }

private:
    long third_;
    OnestepState st_;
};

} // namespace

std::unique_ptr<Agent> make_agent(AlgoId algo, int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    switch (algo) {
    case AlgoId::bc:
    case AlgoId::pct_bc:
        return std::make_unique<BcAgent>(obs_dim, act_dim, cfg);
    case AlgoId::sac:
        return std::make_unique<SacAgent>(obs_dim, act_dim, cfg, false);
    case AlgoId::cql:
        return std::make_unique<SacAgent>(obs_dim, act_dim, cfg, true);
    case AlgoId::td3bc:
        return std::make_unique<Td3bcAgent>(obs_dim, act_dim, cfg);
    case AlgoId::crr:
        return std::make_unique<CrrAgent>(obs_dim, act_dim, cfg);
    case AlgoId::iql:
        return std::make_unique<IqlAgent>(obs_dim, act_dim, cfg);
    case AlgoId::onestep:
        return std::make_unique<OnestepAgent>(obs_dim, act_dim, cfg);
    case AlgoId::muzero:
        return mz::make_muzero_agent(obs_dim, act_dim, cfg);
    }
    throw ContractViolation("make_agent: unknown algorithm");
}

eval::Policy load_policy(const std::filesystem::path& checkpoint)
{
    auto ck = nn::load_checkpoint(checkpoint);
    const std::string kind = ck.extra.value("kind", "");
    if (kind == "actor") {
        auto actor = std::make_shared<Actor>(Actor::load(checkpoint));
        return [actor](const Vec& obs) { return actor->act(obs); };
    }
    if (kind == "muzero") return mz::load_muzero_policy(checkpoint);
    throw SchemaError(checkpoint.string() + ": not a policy checkpoint (kind '" + kind + "')");
}

} // namespace offbench::algo
