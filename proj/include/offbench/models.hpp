#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "offbench/config.hpp"
#include "offbench/nn.hpp"
#include "offbench/policy.hpp"
#include "offbench/rng.hpp"

namespace offbench::algo {

using nn::Mat;
using nn::Vec;

nn::NetSpec make_net_spec(const ChoiceConfig& cfg, int input_dim, int output_dim);

/// Gaussian policy network. State-dependent variance emits 2D outputs (mean, log_std);
/// the shared mode emits D means and keeps log_std in the ParamSet's aux block.
class Actor {
public:
    Actor() = default;
    Actor(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed);
    Actor(nn::ParamSet params, int act_dim, policy::Squash squash, policy::VarianceSource variance);

    struct Forward {
        Mat mean;
        Mat raw_log_std;
        Mat log_std;
        nn::Tape tape;
    };

    Forward forward(const Mat& states) const;
    policy::PolicyHeadOutput head(const Forward& f, Eigen::Index column) const;

    /// Flat gradient from per-column head gradients; clamped log_std entries pass no gradient.
    Vec backward(const Forward& f, const Mat& d_mean, const Mat& d_log_std) const;

    Mat deterministic(const Mat& states) const;
    Vec act(const Vec& obs) const;

    int act_dim() const { return act_dim_; }
    int obs_dim() const { return params.spec().input_dim; }
    policy::Squash squash() const { return squash_; }
    policy::VarianceSource variance() const { return variance_; }

    void save(const std::filesystem::path& path) const;
    static Actor load(const std::filesystem::path& path);

    nn::ParamSet params;

private:
    int act_dim_ = 0;
    policy::Squash squash_ = policy::Squash::tanh_squash;
    policy::VarianceSource variance_ = policy::VarianceSource::state_dependent;
};

/// Reparameterised samples for a whole batch (one per column of `noise`).
struct BatchSample {
    Mat action;
    Vec log_prob;
    std::vector<policy::ReparamSample> draws;
    std::vector<policy::PolicyHeadOutput> heads;
};

BatchSample sample_batch_actions(const Actor& actor, const Actor::Forward& f, const Mat& noise);

/// Back-propagates dL/daction (D x B) and dL/dlog_prob (B) through the draws to the actor parameters.
Vec sample_backward(const Actor& actor, const Actor::Forward& f, const BatchSample& s, const Mat& d_action,
                    const Vec& d_log_prob);

/// Log-density of fixed actions under the actor at each column, and its parameter gradient.
Vec batch_log_prob(const Actor& actor, const Actor::Forward& f, const Mat& actions);
Vec batch_log_prob_backward(const Actor& actor, const Actor::Forward& f, const Mat& actions, const Vec& d_log_prob);

/// Q-network evaluated on the row-concatenation [s; a].
Mat critic_input(const Mat& s, const Mat& a);

/// One or two Q networks with polyak/hard targets. With double_q off only Q1 is used.
class CriticPair {
public:
    CriticPair() = default;
    CriticPair(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed);

    int count() const { return double_q ? 2 : 1; }

    /// min(Q1, Q2) with double_q, else Q1 (online networks).
    Vec predict(const Mat& s, const Mat& a) const;
    Vec predict_target(const Mat& s, const Mat& a) const;
    Vec q(int i, const Mat& s, const Mat& a) const;

    std::array<nn::ParamSet, 2> online;
    std::array<nn::ParamSet, 2> target;
    bool double_q = true;
};

/// Gradient of mean(min_i Q_i(s, a)) style combinations: returns dQ/da for the selected network per column.
struct MinQ {
    Vec value;
    std::vector<int> argmin; // which network produced each column
};
MinQ min_q(const std::array<Vec, 2>& q, int count);

} // namespace offbench::algo
