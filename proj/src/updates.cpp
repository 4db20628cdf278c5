#include <algorithm>
#include <cmath>

#include "offbench/algorithms.hpp"
#include "offbench/errors.hpp"

namespace offbench::algo {

namespace {

// Network seeds and rng streams derived from the run seed.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k)
{
    return seed * 1000003ULL + k;
}

nn::AdamState policy_adam(const nn::ParamSet& p, const ChoiceConfig& cfg, long horizon)
{
    return nn::AdamState::create(p.size(), cfg.policy_lr, cfg.lr_schedule, std::max(horizon, 1L));
}

nn::AdamState value_adam(const nn::ParamSet& p, const ChoiceConfig& cfg)
{
    return nn::AdamState::create(p.size(), cfg.value_lr);
}

std::array<nn::AdamState, 2> critic_adams(const CriticPair& c, const ChoiceConfig& cfg)
{
    return {value_adam(c.online[0], cfg), value_adam(c.online[1], cfg)};
}

void step_critics(CriticPair& critics, std::array<nn::AdamState, 2>& opt, const CriticGrad& g)
{
    for (int i = 0; i < critics.count(); ++i) nn::adam_step(opt[i], critics.online[i], g.grad[i]);
}

void update_targets(CriticPair& critics, const nn::TargetUpdate& rule, long step)
{
    for (int i = 0; i < critics.count(); ++i) nn::target_update(critics.target[i], critics.online[i], rule, step);
}

Vec not_done(const Batch& b)
{
    return Vec::Ones(b.size()) - b.done;
}

QFunction online_q(const CriticPair& critics)
{
    return [&critics](const Mat& s, const Mat& a) { return critics.predict(s, a); };
}

} // namespace

double SacState::alpha() const
{
    return std::exp(log_alpha[0]);
}

SacState make_sac_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    SacState st;
    st.cfg = cfg;
    st.actor = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.critics = CriticPair(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 2));
    st.actor_opt = policy_adam(st.actor.params, cfg, cfg.total_steps);
    st.critic_opt = critic_adams(st.critics, cfg);
    st.log_alpha = Vec::Constant(1, std::log(cfg.sac_alpha));
    st.alpha_opt = nn::AdamState::create(1, cfg.value_lr);
    st.rng = make_rng(cfg.seed, 11);
    st.penalty_rng = make_rng(cfg.seed, 12);
    return st;
}

namespace {

LossLog sac_like_update(SacState& st, const Batch& b, bool conservative)
{
    const auto& cfg = st.cfg;
    const int d = st.actor.act_dim();
    const Eigen::Index n = b.size();
    const double alpha = st.alpha();

    const Mat next_noise = standard_normal(st.rng, d, n);
    const Vec y = sac_target(st.critics, st.actor, b, cfg.discount, alpha, next_noise);
    double penalty = 0.0;
    CriticGrad cg;
    if (conservative) {
        const CqlProposals props = draw_cql_proposals(st.penalty_rng, d, n, cfg.cql_n_actions);
        cg = cql_critic_loss(st.critics, st.actor, b, y, cfg.cql_alpha, props, &penalty);
    } else {
        cg = critic_td_loss(st.critics, b.s, b.a, y);
    }
    step_critics(st.critics, st.critic_opt, cg);

    const Mat noise = standard_normal(st.rng, d, n);
    double mean_lp = 0.0;
    const LossGrad ag = sac_actor_loss(st.actor, st.critics, b.s, alpha, noise, &mean_lp);
    nn::adam_step(st.actor_opt, st.actor.params, ag.grad);

    if (cfg.sac_alpha_auto) {
        const double entropy = -mean_lp;
        const double target = -static_cast<double>(d);
        nn::adam_step(st.alpha_opt, st.log_alpha, Vec::Constant(1, alpha * (entropy - target)));
    }

    ++st.step;
    update_targets(st.critics, cfg.target_update, st.step);

    LossLog log{{"critic_loss", cg.loss}, {"actor_loss", ag.loss}, {"alpha", alpha}, {"entropy", -mean_lp}};
    if (conservative) log.emplace_back("cql_penalty", penalty);
    return log;
}

} // namespace

LossLog sac_update(SacState& st, const Batch& b)
{
    return sac_like_update(st, b, false);
}

LossLog cql_update(SacState& st, const Batch& b)
{
    return sac_like_update(st, b, true);
}

BcState make_bc_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    BcState st;
    st.cfg = cfg;
    st.actor = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.actor_opt = policy_adam(st.actor.params, cfg, cfg.total_steps);
    st.rng = make_rng(cfg.seed, 11);
    return st;
}

LossLog bc_update(BcState& st, const Batch& b)
{
    const Mat noise = standard_normal(st.rng, st.actor.act_dim(), b.size());
    const LossGrad g = bc_loss(st.actor, b.s, b.a, st.cfg.bc_variant, noise);
    nn::adam_step(st.actor_opt, st.actor.params, g.grad);
    ++st.step;
    return {{"actor_loss", g.loss}};
}

Td3bcState make_td3bc_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    Td3bcState st;
    st.cfg = cfg;
    st.actor = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.target_actor = st.actor;
    st.critics = CriticPair(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 2));
    // Delayed actor updates: the schedule horizon counts actor steps only.
    st.actor_opt = policy_adam(st.actor.params, cfg, (cfg.total_steps + st.policy_delay - 1) / st.policy_delay);
    st.critic_opt = critic_adams(st.critics, cfg);
    st.rng = make_rng(cfg.seed, 11);
    return st;
}

LossLog td3bc_update(Td3bcState& st, const Batch& b)
{
    const auto& cfg = st.cfg;
    const Mat noise = standard_normal(st.rng, st.actor.act_dim(), b.size());
    const Vec y = td3bc_target(st.critics, st.target_actor, b, cfg.discount, cfg.td3bc_noise, cfg.td3bc_noise_clip, noise);
    const CriticGrad cg = critic_td_loss(st.critics, b.s, b.a, y);
    step_critics(st.critics, st.critic_opt, cg);

    LossLog log{{"critic_loss", cg.loss}};
    if (st.step % st.policy_delay == 0) {
        const Vec q = st.critics.q(0, b.s, st.actor.deterministic(b.s));
        const double lambda = td3bc_lambda(q, cfg.td3bc_alpha);
        const LossGrad ag = td3bc_actor_loss(st.actor, st.critics.online[0], b.s, b.a, lambda);
        nn::adam_step(st.actor_opt, st.actor.params, ag.grad);
        log.emplace_back("actor_loss", ag.loss);
        log.emplace_back("lambda", lambda);
    }
    ++st.step;
    update_targets(st.critics, cfg.target_update, st.step);
    nn::target_update(st.target_actor.params, st.actor.params, cfg.target_update, st.step);
    return log;
}

CrrState make_crr_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    CrrState st;
    st.cfg = cfg;
    st.actor = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.critics = CriticPair(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 2));
    st.actor_opt = policy_adam(st.actor.params, cfg, cfg.total_steps);
    st.critic_opt = critic_adams(st.critics, cfg);
    st.rng = make_rng(cfg.seed, 11);
    return st;
}

LossLog crr_update(CrrState& st, const Batch& b)
{
    const auto& cfg = st.cfg;
    const auto f2 = st.actor.forward(b.s2);
    const BatchSample next = sample_batch_actions(st.actor, f2, standard_normal(st.rng, st.actor.act_dim(), b.size()));
    const Vec y = b.r + cfg.discount * not_done(b).cwiseProduct(st.critics.predict_target(b.s2, next.action));
    const CriticGrad cg = critic_td_loss(st.critics, b.s, b.a, y);
    step_critics(st.critics, st.critic_opt, cg);

    const Vec adv = crr_advantage(online_q(st.critics), st.actor, b.s, b.a, cfg.n_adv_samples, st.rng);
    const Vec w = awr_weights(adv, cfg.awr_temperature, cfg.awr_weight_clip, cfg.adv_norm);
    const LossGrad ag = weighted_log_prob_loss(st.actor, b.s, b.a, w);
    nn::adam_step(st.actor_opt, st.actor.params, ag.grad);

    ++st.step;
    update_targets(st.critics, cfg.target_update, st.step);
    return {{"critic_loss", cg.loss}, {"actor_loss", ag.loss}, {"mean_weight", w.mean()}};
}

IqlState make_iql_state(int obs_dim, int act_dim, const ChoiceConfig& cfg)
{
    cfg.validate();
    IqlState st;
    st.cfg = cfg;
    st.actor = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.critics = CriticPair(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 2));
    st.value = nn::init_params(make_net_spec(cfg, obs_dim, 1), sub_seed(cfg.seed, 3));
    // Without joint training the actor only runs during the second half.
    const long actor_steps = cfg.iql_joint ? cfg.total_steps : cfg.total_steps - cfg.total_steps / 2;
    st.actor_opt = policy_adam(st.actor.params, cfg, actor_steps);
    st.critic_opt = critic_adams(st.critics, cfg);
    st.value_opt = value_adam(st.value, cfg);
    return st;
}

LossLog iql_update(IqlState& st, const Batch& b, bool train_value_critic, bool train_actor)
{
    const auto& cfg = st.cfg;
    LossLog log;
    if (train_actor) {
        const Vec adv = st.critics.predict_target(b.s, b.a) - value_predict(st.value, b.s);
        const Vec w = awr_weights(adv, cfg.awr_temperature, cfg.awr_weight_clip, cfg.adv_norm);
        const LossGrad ag = weighted_log_prob_loss(st.actor, b.s, b.a, w);
        nn::adam_step(st.actor_opt, st.actor.params, ag.grad);
        log.emplace_back("actor_loss", ag.loss);
        log.emplace_back("mean_weight", w.mean());
    }
    if (train_value_critic) {
        const LossGrad vg = iql_value_loss(st.value, b.s, st.critics.predict_target(b.s, b.a), cfg.expectile);
        nn::adam_step(st.value_opt, st.value, vg.grad);
        const Vec y = b.r + cfg.discount * not_done(b).cwiseProduct(value_predict(st.value, b.s2));
        const CriticGrad cg = critic_td_loss(st.critics, b.s, b.a, y);
        step_critics(st.critics, st.critic_opt, cg);
        log.emplace_back("value_loss", vg.loss);
        log.emplace_back("critic_loss", cg.loss);
    }
    ++st.step;
    if (train_value_critic) update_targets(st.critics, cfg.target_update, st.step);
    return log;
}

OnestepState make_onestep_state(int obs_dim, int act_dim, const ChoiceConfig& cfg, long improve_steps)
{
    cfg.validate();
    OnestepState st;
    st.cfg = cfg;
    st.behavior = Actor(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 1));
    st.policy = st.behavior;
    st.critics = CriticPair(obs_dim, act_dim, cfg, sub_seed(cfg.seed, 2));
    st.behavior_opt = nn::AdamState::create(st.behavior.params.size(), cfg.policy_lr);
    st.policy_opt = policy_adam(st.policy.params, cfg, improve_steps);
    st.critic_opt = critic_adams(st.critics, cfg);
    st.rng = make_rng(cfg.seed, 11);
    return st;
}

void onestep_advance(OnestepState& st, OnestepStage next)
{
    if (static_cast<int>(next) != static_cast<int>(st.stage) + 1)
        throw ContractViolation("onestep: stages must run in order behavior -> critic -> improve");
    st.stage = next;
    if (next == OnestepStage::improve) st.policy.params = st.behavior.params;
}

namespace {

void require_stage(const OnestepState& st, OnestepStage stage, const char* what)
{
    if (st.stage != stage) throw ContractViolation(std::string("onestep: ") + what + " called in the wrong stage");
}

} // namespace

LossLog onestep_behavior_update(OnestepState& st, const Batch& b)
{
    require_stage(st, OnestepStage::behavior, "behavior update");
    const Mat noise = standard_normal(st.rng, st.behavior.act_dim(), b.size());
    const LossGrad g = bc_loss(st.behavior, b.s, b.a, st.cfg.bc_variant, noise);
    nn::adam_step(st.behavior_opt, st.behavior.params, g.grad);
    ++st.step;
    return {{"behavior_loss", g.loss}};
}

LossLog onestep_critic_update(OnestepState& st, const Batch& b)
{
    require_stage(st, OnestepStage::critic, "critic update");
    if ((b.a2_valid.array() + b.done.array() < 1.0).any()) throw ContractViolation("onestep: SARSA update needs valid next actions");
    const auto& cfg = st.cfg;
    const Vec y = b.r + cfg.discount * not_done(b).cwiseProduct(st.critics.predict_target(b.s2, b.a2));
    const CriticGrad cg = critic_td_loss(st.critics, b.s, b.a, y);
    step_critics(st.critics, st.critic_opt, cg);
    ++st.step;
    update_targets(st.critics, cfg.target_update, st.step);
    return {{"critic_loss", cg.loss}};
}

LossLog onestep_improve_update(OnestepState& st, const Batch& b)
{
    require_stage(st, OnestepStage::improve, "improvement update");
    const auto& cfg = st.cfg;
    const Vec adv = crr_advantage(online_q(st.critics), st.behavior, b.s, b.a, cfg.n_adv_samples, st.rng);
    const Vec w = awr_weights(adv, cfg.awr_temperature, cfg.awr_weight_clip, cfg.adv_norm);
    const LossGrad ag = weighted_log_prob_loss(st.policy, b.s, b.a, w);
    nn::adam_step(st.policy_opt, st.policy.params, ag.grad);
    ++st.step;
    return {{"actor_loss", ag.loss}, {"mean_weight", w.mean()}};
}

} // namespace offbench::algo
