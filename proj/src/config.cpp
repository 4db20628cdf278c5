#include "offbench/config.hpp"

#include <cmath>

#include "offbench/errors.hpp"

namespace offbench::algo {

namespace {

struct AlgoName {
    AlgoId id;
    const char* name;
};

constexpr AlgoName kAlgoNames[] = {
    {AlgoId::bc, "bc"},         {AlgoId::pct_bc, "pct_bc"}, {AlgoId::sac, "sac"},
    {AlgoId::td3bc, "td3bc"},   {AlgoId::cql, "cql"},       {AlgoId::crr, "crr"},
    {AlgoId::onestep, "onestep"}, {AlgoId::iql, "iql"},     {AlgoId::muzero, "muzero"},
};

void require(bool ok, const char* field, const char* what)
{
    if (!ok) throw ConfigError(field, what);
}

bool finite(double v)
{
    return std::isfinite(v);
}

} // namespace

std::string to_string(AlgoId id)
{
    for (const auto& a : kAlgoNames)
        if (a.id == id) return a.name;
    return "?";
}

AlgoId parse_algo_id(std::string_view s)
{
    for (const auto& a : kAlgoNames)
        if (s == a.name) return a.id;
    throw ConfigError("algo", "unknown algorithm '" + std::string(s) + "'");
}

const std::vector<AlgoId>& all_algorithms()
{
    static const std::vector<AlgoId> ids = [] {
        std::vector<AlgoId> v;
        for (const auto& a : kAlgoNames) v.push_back(a.id);
        return v;
    }();
    return ids;
}

void ChoiceConfig::validate() const
{
    require(finite(policy_lr) && policy_lr > 0.0 && policy_lr < 1.0, "policy_lr", "must lie in (0, 1)");
    require(finite(value_lr) && value_lr > 0.0 && value_lr < 1.0, "value_lr", "must lie in (0, 1)");
    require(!hidden_dims.empty(), "hidden_dims", "must be non-empty");
    for (int h : hidden_dims) require(h >= 1, "hidden_dims", "all dims must be >= 1");
    require(cql_n_actions >= 1, "cql_n_actions", "must be >= 1");
    require(finite(cql_alpha) && cql_alpha >= 0.0, "cql_alpha", "must be >= 0");
    require(finite(expectile) && expectile > 0.0 && expectile < 1.0, "expectile", "must lie in (0, 1)");
    require(finite(awr_temperature) && awr_temperature > 0.0, "awr_temperature", "must be > 0");
    require(finite(awr_weight_clip) && awr_weight_clip > 0.0, "awr_weight_clip", "must be > 0");
    require(n_adv_samples >= 1, "n_adv_samples", "must be >= 1");
    require(finite(sac_alpha) && sac_alpha >= 0.0, "sac_alpha", "must be >= 0");
    require(!sac_alpha_auto || sac_alpha > 0.0, "sac_alpha", "auto-tuning needs a positive initial value");
    require(finite(td3bc_alpha) && td3bc_alpha >= 0.0, "td3bc_alpha", "must be >= 0");
    require(finite(td3bc_noise) && td3bc_noise >= 0.0, "td3bc_noise", "must be >= 0");
    require(finite(td3bc_noise_clip) && td3bc_noise_clip >= 0.0, "td3bc_noise_clip", "must be >= 0");
    require(finite(top_fraction) && top_fraction > 0.0 && top_fraction <= 1.0, "top_fraction", "must lie in (0, 1]");
    require(finite(discount) && discount >= 0.0 && discount <= 1.0, "discount", "must lie in [0, 1]");
    require(batch_size >= 1, "batch_size", "must be >= 1");
    require(total_steps >= 0, "total_steps", "must be >= 0");
    require(eval_every >= 1, "eval_every", "must be >= 1");
    require(eval_episodes >= 1, "eval_episodes", "must be >= 1");
    require(running_window >= 1, "running_window", "must be >= 1");
    if (target_update.mode == nn::TargetUpdate::Mode::polyak)
        require(target_update.rho >= 0.0 && target_update.rho <= 1.0, "target_rho", "must lie in [0, 1]");
    else
        require(target_update.period >= 1, "target_period", "must be >= 1");
    require(mz_latent_dim >= 1, "mz_latent_dim", "must be >= 1");
    require(mz_unroll_steps >= 0, "mz_unroll_steps", "must be >= 0");
    require(mz_td_steps >= 1, "mz_td_steps", "must be >= 1");
    require(mz_num_samples >= 1, "mz_num_samples", "must be >= 1");
    require(mz_simulations >= 1, "mz_simulations", "must be >= 1");
    require(finite(mz_c1) && mz_c1 >= 0.0, "mz_c1", "must be >= 0");
    require(finite(mz_c2) && mz_c2 > 0.0, "mz_c2", "must be > 0");
    require(mz_target_period >= 1, "mz_target_period", "must be >= 1");
    require(mz_sampling_policy == "prior", "mz_sampling_policy",
            "only sampling from the prediction policy (beta = pi) is supported");
}

nlohmann::json to_json(const ChoiceConfig& c)
{
    return {
        {"init_scheme", nn::to_string(c.init_scheme)},
        {"policy_lr", c.policy_lr},
        {"value_lr", c.value_lr},
        {"lr_schedule", nn::to_string(c.lr_schedule)},
        {"reward_norm", c.reward_norm},
        {"squash", policy::to_string(c.squash)},
        {"variance_source", policy::to_string(c.variance_source)},
        {"layer_norm", c.layer_norm},
        {"activation", nn::to_string(c.activation)},
        {"hidden_dims", c.hidden_dims},
        {"double_q", c.double_q},
        {"adv_norm", c.adv_norm},
        {"cql_n_actions", c.cql_n_actions},
        {"cql_alpha", c.cql_alpha},
        {"expectile", c.expectile},
        {"iql_joint", c.iql_joint},
        {"awr_temperature", c.awr_temperature},
        {"awr_weight_clip", c.awr_weight_clip},
        {"n_adv_samples", c.n_adv_samples},
        {"sac_alpha_mode", c.sac_alpha_auto ? "auto" : "fixed"},
        {"sac_alpha", c.sac_alpha},
        {"td3bc_alpha", c.td3bc_alpha},
        {"td3bc_noise", c.td3bc_noise},
        {"td3bc_noise_clip", c.td3bc_noise_clip},
        {"bc_variant", c.bc_variant == BcVariant::mle ? "mle" : "mse_reparam"},
        {"top_fraction", c.top_fraction},
        {"discount", c.discount},
        {"batch_size", c.batch_size},
        {"total_steps", c.total_steps},
        {"eval_every", c.eval_every},
        {"eval_episodes", c.eval_episodes},
        {"running_window", c.running_window},
        {"target_update", c.target_update.mode == nn::TargetUpdate::Mode::polyak ? "polyak" : "hard"},
        {"target_rho", c.target_update.rho},
        {"target_period", c.target_update.period},
        {"seed", c.seed},
        {"mz_latent_dim", c.mz_latent_dim},
        {"mz_unroll_steps", c.mz_unroll_steps},
        {"mz_td_steps", c.mz_td_steps},
        {"mz_num_samples", c.mz_num_samples},
        {"mz_simulations", c.mz_simulations},
        {"mz_c1", c.mz_c1},
        {"mz_c2", c.mz_c2},
        {"mz_target_period", c.mz_target_period},
        {"mz_root_noise", c.mz_root_noise},
        {"mz_sampling_policy", c.mz_sampling_policy},
    };
}

namespace {

template <class T>
T read(const nlohmann::json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(key, std::string("bad value: ") + e.what());
    }
}

std::string read_str(const nlohmann::json& j, const char* key)
{
    return read<std::string>(j, key);
}

} // namespace

ChoiceConfig config_from_json(const nlohmann::json& j, const ChoiceConfig& base)
{
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    nlohmann::json merged = to_json(base);
    for (const auto& [key, value] : j.items()) {
        if (!key.empty() && key.front() == '_') continue;
        if (!merged.contains(key)) throw ConfigError(key, "unknown configuration field");
        merged[key] = value;
    }
    const nlohmann::json& m = merged;
    ChoiceConfig c;
    c.init_scheme = nn::parse_init_scheme(read_str(m, "init_scheme"));
    c.policy_lr = read<double>(m, "policy_lr");
    c.value_lr = read<double>(m, "value_lr");
    c.lr_schedule = nn::parse_lr_schedule(read_str(m, "lr_schedule"));
    c.reward_norm = read<bool>(m, "reward_norm");
    c.squash = policy::parse_squash(read_str(m, "squash"));
    c.variance_source = policy::parse_variance_source(read_str(m, "variance_source"));
    c.layer_norm = read<bool>(m, "layer_norm");
    c.activation = nn::parse_activation(read_str(m, "activation"));
    c.hidden_dims = read<std::vector<int>>(m, "hidden_dims");
    c.double_q = read<bool>(m, "double_q");
    c.adv_norm = read<bool>(m, "adv_norm");
    c.cql_n_actions = read<int>(m, "cql_n_actions");
    c.cql_alpha = read<double>(m, "cql_alpha");
    c.expectile = read<double>(m, "expectile");
    c.iql_joint = read<bool>(m, "iql_joint");
    c.awr_temperature = read<double>(m, "awr_temperature");
    c.awr_weight_clip = read<double>(m, "awr_weight_clip");
    c.n_adv_samples = read<int>(m, "n_adv_samples");
    const std::string alpha_mode = read_str(m, "sac_alpha_mode");
    if (alpha_mode != "auto" && alpha_mode != "fixed") throw ConfigError("sac_alpha_mode", "must be 'auto' or 'fixed'");
    c.sac_alpha_auto = alpha_mode == "auto";
    c.sac_alpha = read<double>(m, "sac_alpha");
    c.td3bc_alpha = read<double>(m, "td3bc_alpha");
    c.td3bc_noise = read<double>(m, "td3bc_noise");
    c.td3bc_noise_clip = read<double>(m, "td3bc_noise_clip");
    const std::string bc = read_str(m, "bc_variant");
    if (bc != "mle" && bc != "mse_reparam") throw ConfigError("bc_variant", "must be 'mle' or 'mse_reparam'");
    c.bc_variant = bc == "mle" ? BcVariant::mle : BcVariant::mse_reparam;
    c.top_fraction = read<double>(m, "top_fraction");
    c.discount = read<double>(m, "discount");
    c.batch_size = read<int>(m, "batch_size");
    c.total_steps = read<long>(m, "total_steps");
    c.eval_every = read<long>(m, "eval_every");
    c.eval_episodes = read<int>(m, "eval_episodes");
    c.running_window = read<int>(m, "running_window");
    const std::string tu = read_str(m, "target_update");
    if (tu != "polyak" && tu != "hard") throw ConfigError("target_update", "must be 'polyak' or 'hard'");
    c.target_update.mode = tu == "polyak" ? nn::TargetUpdate::Mode::polyak : nn::TargetUpdate::Mode::hard;
    c.target_update.rho = read<double>(m, "target_rho");
    c.target_update.period = read<long>(m, "target_period");
    c.seed = read<std::uint64_t>(m, "seed");
    c.mz_latent_dim = read<int>(m, "mz_latent_dim");
    c.mz_unroll_steps = read<int>(m, "mz_unroll_steps");
    c.mz_td_steps = read<int>(m, "mz_td_steps");
    c.mz_num_samples = read<int>(m, "mz_num_samples");
    c.mz_simulations = read<int>(m, "mz_simulations");
    c.mz_c1 = read<double>(m, "mz_c1");
    c.mz_c2 = read<double>(m, "mz_c2");
    c.mz_target_period = read<long>(m, "mz_target_period");
    c.mz_root_noise = read<bool>(m, "mz_root_noise");
    c.mz_sampling_policy = read_str(m, "mz_sampling_policy");
    c.validate();
    return c;
}

ChoiceConfig with_field(const ChoiceConfig& cfg, const std::string& field, const nlohmann::json& value)
{
    return config_from_json(nlohmann::json{{field, value}}, cfg);
}

ChoiceConfig defaults_for(AlgoId algo)
{
    ChoiceConfig c;
    switch (algo) {
    case AlgoId::bc:
        break;
    case AlgoId::pct_bc:
        c.top_fraction = 0.1;
        break;
    case AlgoId::sac:
        c.double_q = true;
        break;
    case AlgoId::td3bc:
        c.double_q = true;
        c.td3bc_alpha = 2.5;
        break;
    case AlgoId::cql:
        c.double_q = true;
        c.cql_n_actions = 10;
        c.cql_alpha = 5.0;
        c.activation = nn::Activation::relu;
        break;
    case AlgoId::crr:
        c.double_q = false;
        c.awr_temperature = 1.0;
        c.awr_weight_clip = 20.0;
        break;
    case AlgoId::onestep:
        c.double_q = false;
        c.bc_variant = BcVariant::mle;
        c.awr_temperature = 1.0;
        c.awr_weight_clip = 20.0;
        break;
    case AlgoId::iql:
        c.double_q = true;
        c.expectile = 0.7;
        c.awr_temperature = 1.0 / 3.0;
        c.awr_weight_clip = 100.0;
        c.iql_joint = true;
        break;
    case AlgoId::muzero:
        c.target_update.mode = nn::TargetUpdate::Mode::hard;
        c.target_update.period = 200;
        c.batch_size = 32;
        break;
    }
    return c;
}

const std::vector<Preset>& presets()
{
    static const std::vector<Preset> all = {
        {"crr_plus",
         AlgoId::crr,
         {{"double_q", true},
          {"layer_norm", true},
          {"init_scheme", "lecun_normal"},
          {"policy_lr", 1e-4},
          {"reward_norm", false},
          {"squash", "tanh_squash"},
          {"variance_source", "state_dependent"}},
         "CRR with double Q and layer norm"},
        {"cql_plus",
         AlgoId::cql,
         {{"cql_n_actions", 50},
          {"policy_lr", 1e-4},
          {"activation", "elu"},
          {"squash", "tanh_squash"},
          {"reward_norm", false}},
         "CQL with 50 proposal actions per distribution, slower policy, elu"},
        {"iql_official",
         AlgoId::iql,
         {{"expectile", 0.7},
          {"awr_temperature", 1.0 / 3.0},
          {"awr_weight_clip", 100.0},
          {"iql_joint", true},
          {"policy_lr", 3e-4},
          {"lr_schedule", "cosine"},
          {"reward_norm", true},
          {"squash", "clipped_tanh_mean"},
          {"variance_source", "shared_parameter"},
          {"activation", "relu"},
          {"double_q", true}},
         "IQL as in its reference implementation"},
        {"guidebook_default",
         std::nullopt,
         {{"init_scheme", "lecun_normal"},
          {"activation", "elu"},
          {"layer_norm", true},
          {"variance_source", "state_dependent"}},
         "starting point for new algorithms; try both policy_lr in {1e-4, 3e-4}, reward_norm on/off and "
         "squash tanh_squash/clipped_tanh_mean"},
    };
    return all;
}

const Preset& find_preset(std::string_view name)
{
    for (const auto& p : presets())
        if (p.name == name) return p;
    throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
}

ChoiceConfig apply_preset(std::string_view name, AlgoId algo)
{
    const Preset& p = find_preset(name);
    if (p.algo && *p.algo != algo)
        throw ConfigError("preset", "preset '" + p.name + "' belongs to algorithm " + to_string(*p.algo));
    return config_from_json(p.overrides, defaults_for(algo));
}

} // namespace offbench::algo
