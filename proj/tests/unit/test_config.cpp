#include <doctest.h>

#include <string>

#include "offbench/config.hpp"
#include "offbench/errors.hpp"

using namespace offbench;
using namespace offbench::algo;
using nlohmann::json;

namespace {

std::string offending_field(const ChoiceConfig& c)
{
    try {
        c.validate();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

} // namespace

TEST_SUITE("config")
{
    TEST_CASE("defaults validate for every algorithm")
    {
        for (auto id : all_algorithms()) {
            CHECK(offending_field(defaults_for(id)).empty());
            CHECK(parse_algo_id(to_string(id)) == id);
        }
        CHECK_THROWS_AS(parse_algo_id("ppo"), ConfigError);
    }

    TEST_CASE("out-of-range values name the field")
    {
        ChoiceConfig c;
        c.target_update.rho = 1.5;
        CHECK(offending_field(c) == "target_rho");
        c = {};
        c.expectile = 1.0;
        CHECK(offending_field(c) == "expectile");
        c = {};
        c.top_fraction = 0.0;
        CHECK(offending_field(c) == "top_fraction");
        c = {};
        c.policy_lr = -1e-4;
        CHECK(offending_field(c) == "policy_lr");
        c = {};
        c.mz_simulations = 0;
        CHECK(offending_field(c) == "mz_simulations");
        c = {};
        c.hidden_dims = {};
        CHECK(offending_field(c) == "hidden_dims");
        c = {};
        c.total_steps = 0;
        CHECK(offending_field(c).empty());
    }

    TEST_CASE("json round trip")
    {
        ChoiceConfig c = defaults_for(AlgoId::iql);
        c.hidden_dims = {16, 8};
        c.sac_alpha_auto = false;
        c.sac_alpha = 0.2;
        c.target_update.mode = nn::TargetUpdate::Mode::hard;
        c.target_update.period = 7;
        c.seed = 42;
        const json j = to_json(c);
        CHECK(to_json(config_from_json(j)) == j);
        CHECK(j.at("sac_alpha_mode") == "fixed");
        CHECK(j.at("target_update") == "hard");
    }

    TEST_CASE("unknown and malformed fields")
    {
        try {
            config_from_json(json{{"learning_rate", 0.1}});
            FAIL("expected a config error");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "learning_rate");
        }
        CHECK_THROWS_AS(config_from_json(json{{"policy_lr", "fast"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json{{"sac_alpha_mode", "sometimes"}}), ConfigError);
        CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
        const auto c = with_field(ChoiceConfig{}, "expectile", 0.9);
        CHECK(c.expectile == 0.9);
        CHECK_THROWS_AS(with_field(ChoiceConfig{}, "expectile", 1.5), ConfigError);
    }

    TEST_CASE("presets")
    {
        const auto crr = apply_preset("crr_plus", AlgoId::crr);
        CHECK(crr.double_q);
        CHECK(crr.layer_norm);
        CHECK(crr.policy_lr == 1e-4);
        const auto cql = apply_preset("cql_plus", AlgoId::cql);
        CHECK(cql.cql_n_actions == 50);
        CHECK(cql.activation == nn::Activation::elu);
        const auto iql = apply_preset("iql_official", AlgoId::iql);
        CHECK(iql.squash == policy::Squash::clipped_tanh_mean);
        CHECK(iql.variance_source == policy::VarianceSource::shared_parameter);
        CHECK(iql.reward_norm);
        CHECK(iql.awr_weight_clip == 100.0);
        for (auto id : all_algorithms()) {
            const auto g = apply_preset("guidebook_default", id);
            CHECK(g.layer_norm);
            CHECK(g.activation == nn::Activation::elu);
            CHECK(offending_field(g).empty());
        }
        CHECK_THROWS_AS(apply_preset("crr_plus", AlgoId::iql), ConfigError);
        CHECK_THROWS_AS(apply_preset("nope", AlgoId::iql), ConfigError);
    }
}
