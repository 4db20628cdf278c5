// Scripted one-step bandit for the search: five fixed root actions, rewards paid on the first
// transition only, absorbing afterwards, zero value everywhere.
#pragma once

#include <algorithm>
#include <array>
#include <numeric>

#include "offbench/muzero.hpp"

namespace offbench::testing {

class BanditModel final : public mz::SearchModel {
public:
    static constexpr int kArms = 5;

    explicit BanditModel(std::uint64_t seed)
    {
        rewards_ = {0.1, 0.3, 0.5, 0.7, 0.9};
        Rng rng = make_rng(seed, 700);
        std::shuffle(rewards_.begin(), rewards_.end(), rng);
    }

    int act_dim() const override { return 1; }

    static double arm_action(int i) { return -0.8 + 0.4 * i; }

    double arm_reward(int i) const { return rewards_[static_cast<std::size_t>(i)]; }

    int best_arm() const
    {
        return static_cast<int>(std::max_element(rewards_.begin(), rewards_.end()) - rewards_.begin());
    }

    // Latent rows: [already acted, reward of the transition into this node].
    mz::Mat initial(const mz::Mat& obs) const override { return mz::Mat::Zero(2, obs.cols()); }

    mz::Mat next(const mz::Mat& latent, const mz::Mat& actions) const override
    {
        mz::Mat out = mz::Mat::Zero(2, latent.cols());
        for (Eigen::Index j = 0; j < latent.cols(); ++j) {
            out(0, j) = 1.0;
            if (latent(0, j) == 0.0) out(1, j) = arm_reward(arm_of(actions(0, j)));
        }
        return out;
    }

    mz::Prediction predict(const mz::Mat& latent) const override
    {
        mz::Prediction p;
        p.mean = mz::Mat::Zero(1, latent.cols());
        p.log_std = mz::Mat::Zero(1, latent.cols());
        p.reward = latent.row(1).transpose();
        p.value = mz::Vec::Zero(latent.cols());
        return p;
    }

    mz::Mat sample_actions(const mz::Prediction&, Eigen::Index, int n, Rng&) const override
    {
        mz::Mat a(1, n);
        for (int i = 0; i < n; ++i) a(0, i) = arm_action(i % kArms);
        return a;
    }

private:
    static int arm_of(double a) { return static_cast<int>(std::lround((a + 0.8) / 0.4)); }

    std::array<double, kArms> rewards_{};
};

} // namespace offbench::testing
