#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "offbench/nn.hpp"
#include "offbench/optim.hpp"
#include "offbench/policy.hpp"

namespace offbench::algo {

enum class AlgoId { bc, pct_bc, sac, td3bc, cql, crr, onestep, iql, muzero };

std::string to_string(AlgoId id);
AlgoId parse_algo_id(std::string_view s);
const std::vector<AlgoId>& all_algorithms();

enum class BcVariant { mle, mse_reparam };

/// Every switchable implementation choice plus the per-algorithm hyperparameters.
/// Field names in JSON match the member names below.
struct ChoiceConfig {
    // Shared implementation choices.
    nn::InitScheme init_scheme = nn::InitScheme::lecun_normal;
    double policy_lr = 3e-4;
    double value_lr = 3e-4;
    nn::LrSchedule lr_schedule = nn::LrSchedule::cosine; // applies to the policy optimizer
    bool reward_norm = false;
    policy::Squash squash = policy::Squash::tanh_squash;
    policy::VarianceSource variance_source = policy::VarianceSource::state_dependent;
    bool layer_norm = false;
    nn::Activation activation = nn::Activation::relu;
    std::vector<int> hidden_dims{256, 256};

    // Algorithm-specific choices.
    bool double_q = true;
    bool adv_norm = false;
    int cql_n_actions = 10;
    double cql_alpha = 5.0;
    double expectile = 0.7;
    bool iql_joint = true;
    double awr_temperature = 1.0; // weights are exp(A / awr_temperature)
    double awr_weight_clip = 20.0;
    int n_adv_samples = 4;
    bool sac_alpha_auto = true;
    double sac_alpha = 1.0; // fixed value, or initial value when auto-tuned
    double td3bc_alpha = 2.5;
    double td3bc_noise = 0.2;
    double td3bc_noise_clip = 0.5;
    BcVariant bc_variant = BcVariant::mse_reparam;
    double top_fraction = 0.1;

    // Training loop.
    double discount = 0.99;
    int batch_size = 256;
    long total_steps = 100000;
    long eval_every = 5000;
    int eval_episodes = 10;
    int running_window = 10;
    nn::TargetUpdate target_update{};
    std::uint64_t seed = 0;

    // MuZero Unplugged.
    int mz_latent_dim = 64;
    int mz_unroll_steps = 5;
    int mz_td_steps = 5;
    int mz_num_samples = 20;
    int mz_simulations = 50;
    double mz_c1 = 1.25;
    double mz_c2 = 19652.0;
    long mz_target_period = 200;
    bool mz_root_noise = false;
    std::string mz_sampling_policy = "prior"; // only beta = pi is supported

    /// Throws ConfigError naming the first field outside its domain.
    void validate() const;
};

nlohmann::json to_json(const ChoiceConfig& cfg);

/// Reads a (possibly partial) JSON object on top of `base`. Unknown keys are an error;
/// keys starting with '_' are treated as comments.
ChoiceConfig config_from_json(const nlohmann::json& j, const ChoiceConfig& base = {});

/// Sets one field from its JSON value (used by sweep axes and CLI overrides).
ChoiceConfig with_field(const ChoiceConfig& cfg, const std::string& field, const nlohmann::json& value);

/// Official defaults of each algorithm before any preset.
ChoiceConfig defaults_for(AlgoId algo);

struct Preset {
    std::string name;
    std::optional<AlgoId> algo; // presets tied to one algorithm
    nlohmann::json overrides;
    std::string notes;
};

const std::vector<Preset>& presets();
const Preset& find_preset(std::string_view name);

/// defaults_for(algo) with the preset's overrides applied.
ChoiceConfig apply_preset(std::string_view name, AlgoId algo);

} // namespace offbench::algo
