#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "offbench/config.hpp"
#include "offbench/dataset.hpp"
#include "offbench/eval.hpp"
#include "offbench/nn.hpp"
#include "offbench/rng.hpp"

namespace offbench::algo {
class Agent;
}

namespace offbench::mz {

using nn::Mat;
using nn::Vec;
using algo::ChoiceConfig;

/// Outputs of the prediction function for a batch of latents (columns).
struct Prediction {
    Mat mean;    // D x B, pre-squash
    Mat log_std; // D x B, clamped
    Vec reward;
    Vec value;
};

/// What the search needs from a model. Batched over columns.
class SearchModel {
public:
    virtual ~SearchModel() = default;
    virtual int act_dim() const = 0;
    virtual Mat initial(const Mat& obs) const = 0;
    virtual Mat next(const Mat& latent, const Mat& actions) const = 0;
    virtual Prediction predict(const Mat& latent) const = 0;
    /// N candidate actions (D x N) for one node, drawn from the node's policy head.
    virtual Mat sample_actions(const Prediction& p, Eigen::Index column, int n, Rng& rng) const;
};

/// Encoder h (obs -> latent), transition g ([latent; action] -> latent) and
/// prediction f (latent -> [mean, log_std, reward, value]).
struct WorldModel final : SearchModel {
    WorldModel() = default;
    WorldModel(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed);

    int act_dim() const override { return act; }
    Mat initial(const Mat& obs) const override;
    Mat next(const Mat& latent, const Mat& actions) const override;
    Prediction predict(const Mat& latent) const override;

    nn::ParamSet h;
    nn::ParamSet g;
    nn::ParamSet f;
    int obs = 0;
    int act = 0;
    int latent = 0;
};

/// Splits raw prediction-network output rows into a Prediction.
Prediction split_prediction(const Mat& out, int act_dim);

struct SearchConfig {
    int num_samples = 20;
    int simulations = 50;
    double c1 = 1.25;
    double c2 = 19652.0;
    double discount = 0.99;
    bool root_noise = false; // mixes the root prior with a uniform prior (0.75 / 0.25)
};

SearchConfig search_config(const ChoiceConfig& cfg);

struct SearchResult {
    Mat actions;        // D x M distinct sampled root actions
    Vec prior;          // empirical sample mass beta_hat per action (sums to 1)
    std::vector<int> visits;
    Vec policy;         // normalised visit counts
    double root_value = 0.0;

    /// Most visited action; ties go to the lowest index.
    Vec best_action() const;
};

/// Sampled MCTS for each observation column, run in lockstep so that model calls are batched.
std::vector<SearchResult> sampled_mcts(const SearchModel& model, const Mat& obs, const SearchConfig& cfg, Rng& rng);
SearchResult sampled_mcts(const SearchModel& model, const Vec& obs, const SearchConfig& cfg, Rng& rng);

/// Selection score of child i: Q_bar + beta_hat * sqrt(N) / (1 + n_i) * (c1 + log((N + c2 + 1) / c2)).
double ucb_score(double q_normalized, double beta_hat, int parent_visits, int child_visits, double c1, double c2);

/// Index of the maximal score; ties resolve to the lowest index.
int select_child(const std::vector<double>& scores);

/// Maps Q into [0, 1] using the running min/max of the tree; unvisited or degenerate gives 0.
class MinMaxStats {
public:
    void update(double q);
    double normalize(double q) const;
    bool degenerate() const { return !(max_ > min_); }

private:
    double min_ = std::numeric_limits<double>::infinity();
    double max_ = -std::numeric_limits<double>::infinity();
};

/// z_t = sum_{i<n'} gamma^i u_{t+i} + gamma^{n'} v(s_{t+n'}), n' = min(n, T - t). The bootstrap
/// term is dropped when the trajectory ended in a true terminal and t+n reaches the end.
double nstep_target(const data::Trajectory& traj, std::size_t t, int n, double gamma,
                    const std::function<double(const Vec&)>& value);

/// K-step unroll training batch. Columns are segments.
struct UnrollBatch {
    Mat obs;                         // obs x B
    std::vector<Mat> actions;        // K entries, D x B (padding uses the zero action)
    Mat value_target;                // (K+1) x B
    Mat value_mask;
    Mat reward_target;               // (K+1) x B; row 0 unused
    Mat reward_mask;
    std::vector<Mat> policy_actions; // K+1 entries, D x (B*N), column b*N + i
    std::vector<Mat> policy_probs;   // K+1 entries, N x B
    Mat policy_mask;                 // (K+1) x B
    int num_samples = 0;

    int unroll_steps() const { return static_cast<int>(actions.size()); }
};

struct ModelGrad {
    Vec h;
    Vec g;
    Vec f;
};

struct UnrollLoss {
    double total = 0.0;
    double policy = 0.0;
    double value = 0.0;
    double reward = 0.0;
    ModelGrad grad;
};

/// Mean over segments of sum_k [policy CE + (v - z)^2] + sum_{k>=1} (r - u)^2.
/// Gradients entering the latent through each transition are multiplied by `latent_grad_scale`
/// (1 gives the exact gradient of the loss).
UnrollLoss unroll_loss(const WorldModel& model, const UnrollBatch& batch, double latent_grad_scale = 0.5);

/// Builds one training batch: segment starts drawn uniformly over transitions, policy targets from
/// searches with `target`, value targets from the target model's n-step returns.
UnrollBatch make_unroll_batch(const data::OfflineDataset& ds, const WorldModel& target, const ChoiceConfig& cfg,
                              int batch_size, Rng& position_rng, Rng& search_rng);

/// Gradient-step state for MuZero Unplugged.
struct MuZeroState {
    ChoiceConfig cfg;
    WorldModel model;
    WorldModel target;
    nn::AdamState opt_h;
    nn::AdamState opt_g;
    nn::AdamState opt_f;
    Rng rng;
    long step = 0;
};

MuZeroState make_muzero_state(int obs_dim, int act_dim, const ChoiceConfig& cfg);
std::vector<std::pair<std::string, double>> muzero_update(MuZeroState& st, const data::OfflineDataset& ds,
                                                          Rng& batch_rng);

/// Acting: search from the observation and take the most visited root action.
eval::Policy search_policy(std::shared_ptr<const WorldModel> model, const SearchConfig& cfg, std::uint64_t seed);

void save_world_model(const std::filesystem::path& dir, const WorldModel& model, const SearchConfig& cfg);
std::unique_ptr<algo::Agent> make_muzero_agent(int obs_dim, int act_dim, const ChoiceConfig& cfg);
eval::Policy load_muzero_policy(const std::filesystem::path& checkpoint);

} // namespace offbench::mz
