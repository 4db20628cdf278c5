#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "offbench/algorithms.hpp"
#include "offbench/dataset.hpp"
#include "offbench/env.hpp"

namespace offbench::gen {

enum class DatasetKind { random, medium, expert, medium_expert, medium_replay, full_replay };

std::string to_string(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view s);

/// Random-policy and expert scores of each environment (undiscounted episode returns),
/// measured once with `offbench-refs` and frozen here.
struct ReferenceScores {
    double random = 0.0;
    double expert = 0.0;
};

ReferenceScores reference_scores(env::EnvId id);

/// SAC settings used for data collection.
algo::ChoiceConfig online_sac_config(std::uint64_t seed);

struct OnlineOptions {
    long warmup_steps = 1000;     // uniform-random actions before learning starts
    long eval_every = 500;
    int eval_episodes = 10;
    double medium_threshold = 40.0; // normalized score that marks the medium checkpoint
};

struct OnlineRun {
    env::EnvId env = env::EnvId::pointmass1d;
    std::uint64_t seed = 0;
    std::vector<data::Trajectory> buffer; // chronological; the last one may be partial
    long env_steps = 0;
    std::optional<algo::Actor> medium;
    std::optional<algo::Actor> expert;
    long medium_step = -1;
    std::size_t medium_buffer_trajectories = 0; // buffer prefix (in trajectories) at the medium snapshot
    double best_score = 0.0;                    // best normalized evaluation score seen
    std::vector<std::pair<long, double>> evaluations;

    /// Throws GenerationError naming the achieved score when the checkpoint does not exist.
    const algo::Actor& checkpoint(DatasetKind kind) const;
    std::size_t transitions() const;
};

/// Online SAC with a growing replay buffer; one gradient step per environment step after warm-up.
OnlineRun collect_online(env::EnvId env, const algo::ChoiceConfig& sac_config, long total_steps, std::uint64_t seed,
                         const OnlineOptions& options = {});

void save_online_run(const std::filesystem::path& dir, const OnlineRun& run);
OnlineRun load_online_run(const std::filesystem::path& dir);

/// Builds a dataset of `size` trajectories. Replay kinds are evenly downsampled to `size`
/// trajectories when the buffer holds more. Kinds other than random need `run`.
data::OfflineDataset generate_dataset(env::EnvId env, DatasetKind kind, std::size_t size, std::uint64_t seed,
                                      const OnlineRun* run = nullptr);

/// Stochastic (sampled-action) rollouts of a policy, or uniform actions when `actor` is null.
std::vector<data::Trajectory> rollouts(env::EnvId env, const algo::Actor* actor, std::size_t episodes, Rng& rng);

} // namespace offbench::gen
