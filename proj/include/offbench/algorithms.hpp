#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "offbench/config.hpp"
#include "offbench/dataset.hpp"
#include "offbench/models.hpp"
#include "offbench/optim.hpp"
#include "offbench/rng.hpp"

namespace offbench::algo {

using data::Batch;

/// Named scalar losses of one update, in a fixed order per algorithm.
using LossLog = std::vector<std::pair<std::string, double>>;

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

/// Critic losses summed over the active networks, with one gradient per network.
struct CriticGrad {
    double loss = 0.0;
    std::array<Vec, 2> grad;
};

/// Q(s, a) evaluated column-wise.
using QFunction = std::function<Vec(const Mat& s, const Mat& a)>;

// ---------------------------------------------------------------------------
// Loss building blocks. All take their randomness as explicit noise so that
// gradients can be checked against finite differences.

double expectile_loss(double x, double tau);
double expectile_grad(double x, double tau);

/// mle: -mean log pi(a|s); mse_reparam: mean ||a_hat - a||^2 with a_hat drawn from `noise`.
LossGrad bc_loss(const Actor& actor, const Mat& s, const Mat& a, BcVariant variant, const Mat& noise);

/// mean (Q_i(s,a) - y)^2 for each active network.
CriticGrad critic_td_loss(const CriticPair& critics, const Mat& s, const Mat& a, const Vec& y);

/// r + gamma (1 - done) [min target Q(s', a') - alpha log pi(a'|s')], a' from `next_noise`.
Vec sac_target(const CriticPair& critics, const Actor& actor, const Batch& b, double gamma, double alpha,
               const Mat& next_noise);

/// mean[alpha log pi(a~|s) - min Q(s, a~)]. `mean_log_prob` receives the batch mean of log pi.
LossGrad sac_actor_loss(const Actor& actor, const CriticPair& critics, const Mat& s, double alpha,
                        const Mat& noise, double* mean_log_prob = nullptr);

enum class ProposalSource { policy_s, policy_s2, uniform };

/// Noise for the importance-sampled logsumexp; column j*n + k belongs to state j.
struct CqlProposals {
    int n = 0;
    std::vector<ProposalSource> sources{ProposalSource::policy_s, ProposalSource::policy_s2, ProposalSource::uniform};
    std::vector<Mat> noise; // one D x (n*B) block per source (standard normal, or U(-1,1) actions)
};

CqlProposals draw_cql_proposals(Rng& rng, int act_dim, Eigen::Index batch, int n,
                                std::vector<ProposalSource> sources = {ProposalSource::policy_s,
                                                                       ProposalSource::policy_s2,
                                                                       ProposalSource::uniform});

/// Proposal actions for every state, their log proposal densities and the states they score.
struct ProposalSet {
    Mat states;  // obs x (S*n*B): the state s_j repeated
    Mat actions; // D x (S*n*B)
    Vec log_q;
    int per_state = 0; // S*n
};

ProposalSet build_proposals(const Actor& actor, const Mat& s, const Mat& s2, const CqlProposals& p);

/// L_hat(s_j) = log((1/(S n)) sum_k exp(Q(s_j, a_k) - log q_k)).
Vec cql_logsumexp(const QFunction& q, const Actor& actor, const Mat& s, const Mat& s2, const CqlProposals& p);
Vec cql_logsumexp(const QFunction& q, const Actor& actor, const Mat& s, const Mat& s2, int n, Rng& rng);

/// TD loss plus cql_alpha * mean[L_hat - Q(s, a_data)] per network. `penalty` receives the
/// per-network penalties summed (before scaling by cql_alpha).
CriticGrad cql_critic_loss(const CriticPair& critics, const Actor& actor, const Batch& b, const Vec& y,
                           double cql_alpha, const CqlProposals& p, double* penalty = nullptr);

/// A = Q_hat(s, a) - (1/m) sum_i Q_hat(s, a_i), a_i ~ pi(.|s).
Vec crr_advantage(const QFunction& q_hat, const Actor& actor, const Mat& s, const Mat& a, int m, Rng& rng);

/// w = min(exp(A / temperature), clip); with adv_norm the exponentials are divided by their batch mean first.
Vec awr_weights(const Vec& adv, double temperature, double clip, bool adv_norm);

/// -mean[w * log pi(a|s)] with w held fixed.
LossGrad weighted_log_prob_loss(const Actor& actor, const Mat& s, const Mat& a, const Vec& w);

/// alpha / mean|q| (a constant for the actor gradient).
double td3bc_lambda(const Vec& q, double alpha);

/// -lambda mean Q1(s, tanh(mu(s))) + mean ||tanh(mu(s)) - a||^2.
LossGrad td3bc_actor_loss(const Actor& actor, const nn::ParamSet& q1, const Mat& s, const Mat& a, double lambda);

/// Smoothed deterministic target: r + gamma (1 - done) min Q'(s', clip(tanh(mu'(s')) + eps, -1, 1)).
Vec td3bc_target(const CriticPair& critics, const Actor& target_actor, const Batch& b, double gamma,
                 double noise_std, double noise_clip, const Mat& noise);

/// mean L2^tau(q_target - V(s)); gradient w.r.t. the value network only.
LossGrad iql_value_loss(const nn::ParamSet& value, const Mat& s, const Vec& q_target, double tau);

Vec value_predict(const nn::ParamSet& value, const Mat& s);

// ---------------------------------------------------------------------------
// Per-algorithm training state and single-step updates.

struct SacState {
    ChoiceConfig cfg;
    Actor actor;
    CriticPair critics;
    nn::AdamState actor_opt;
    std::array<nn::AdamState, 2> critic_opt;
    nn::AdamState alpha_opt;
    Vec log_alpha = Vec::Zero(1);
    Rng rng;         // policy sampling noise
    Rng penalty_rng; // CQL proposals only
    long step = 0;

    double alpha() const;
};

SacState make_sac_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);
LossLog sac_update(SacState& st, const Batch& b);
LossLog cql_update(SacState& st, const Batch& b);

struct BcState {
    ChoiceConfig cfg;
    Actor actor;
    nn::AdamState actor_opt;
    Rng rng;
    long step = 0;
};

BcState make_bc_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);
LossLog bc_update(BcState& st, const Batch& b);

struct Td3bcState {
    ChoiceConfig cfg;
    Actor actor;
    Actor target_actor;
    CriticPair critics;
    nn::AdamState actor_opt;
    std::array<nn::AdamState, 2> critic_opt;
    Rng rng;
    long step = 0;
    int policy_delay = 2;
};

Td3bcState make_td3bc_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);
LossLog td3bc_update(Td3bcState& st, const Batch& b);

struct CrrState {
    ChoiceConfig cfg;
    Actor actor;
    CriticPair critics;
    nn::AdamState actor_opt;
    std::array<nn::AdamState, 2> critic_opt;
    Rng rng;
    long step = 0;
};

CrrState make_crr_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);
LossLog crr_update(CrrState& st, const Batch& b);

struct IqlState {
    ChoiceConfig cfg;
    Actor actor;
    CriticPair critics;
    nn::ParamSet value;
    nn::AdamState actor_opt;
    std::array<nn::AdamState, 2> critic_opt;
    nn::AdamState value_opt;
    long step = 0;
};

IqlState make_iql_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);

/// One step of the selected parts; the joint variant passes both flags.
LossLog iql_update(IqlState& st, const Batch& b, bool train_value_critic = true, bool train_actor = true);

enum class OnestepStage { behavior = 1, critic = 2, improve = 3 };

struct OnestepState {
    ChoiceConfig cfg;
    Actor behavior;
    Actor policy;
    CriticPair critics;
    nn::AdamState behavior_opt;
    nn::AdamState policy_opt;
    std::array<nn::AdamState, 2> critic_opt;
    Rng rng;
    OnestepStage stage = OnestepStage::behavior;
    long step = 0;
};

OnestepState make_onestep_state(int obs_dim, int act_dim, const ChoiceConfig& cfg, long improve_steps);

/// Moves to the next stage; skipping a stage is a ContractViolation. Entering the
/// improvement stage initialises the policy from the fitted behavior model.
void onestep_advance(OnestepState& st, OnestepStage next);

/// Stage 1: behavior cloning of the dataset (transition view).
LossLog onestep_behavior_update(OnestepState& st, const Batch& b);
/// Stage 2: SARSA evaluation of the behavior policy (sarsa view).
LossLog onestep_critic_update(OnestepState& st, const Batch& b);
/// Stage 3: one advantage-weighted improvement step with frozen critics.
LossLog onestep_improve_update(OnestepState& st, const Batch& b);

} // namespace offbench::algo
