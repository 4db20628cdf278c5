#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "offbench/algorithms.hpp"
#include "offbench/eval.hpp"

namespace offbench::algo {

/// Uniform training interface used by the run loop. Each agent samples its own
/// minibatches (views differ between algorithms and stages).
class Agent {
public:
    virtual ~Agent() = default;

    /// Column names of the loss log, in order.
    virtual std::vector<std::string> loss_names() const = 0;

    /// One gradient step. Losses not computed this step are simply absent.
    virtual LossLog step(const data::OfflineDataset& ds, Rng& batch_rng) = 0;

    /// Evaluation-time acting.
    virtual eval::Policy policy() const = 0;

    /// Learning rate of the policy optimiser for the next step.
    virtual double policy_lr() const = 0;

    /// Writes `policy.ckpt` (plus any auxiliary networks) into `dir`.
    virtual void save(const std::filesystem::path& dir) const = 0;
};

std::unique_ptr<Agent> make_agent(AlgoId algo, int obs_dim, int act_dim, const ChoiceConfig& cfg);

/// Restores an acting policy from a `policy.ckpt` written by any agent.
eval::Policy load_policy(const std::filesystem::path& checkpoint);

} // namespace offbench::algo
