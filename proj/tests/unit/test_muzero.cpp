#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bandit.hpp"
#include "offbench/errors.hpp"
#include "offbench/muzero.hpp"

using namespace offbench;
using namespace offbench::mz;
using offbench::testing::BanditModel;

namespace {

data::Trajectory rewards_traj(const std::vector<double>& r, bool terminal)
{
    data::Trajectory t;
    for (std::size_t i = 0; i <= r.size(); ++i) t.states.push_back(Vec::Constant(1, static_cast<double>(i)));
    for (std::size_t i = 0; i < r.size(); ++i) t.actions.push_back(Vec::Zero(1));
    t.rewards = r;
    t.terminal = terminal;
    return t;
}

ChoiceConfig tiny_mz(std::uint64_t seed)
{
    ChoiceConfig c = algo::defaults_for(algo::AlgoId::muzero);
    c.hidden_dims = {8};
    c.mz_latent_dim = 4;
    c.mz_unroll_steps = 2;
    c.mz_td_steps = 3;
    c.mz_num_samples = 4;
    c.mz_simulations = 6;
    c.batch_size = 4;
    c.total_steps = 10;
    c.seed = seed;
    return c;
}

data::OfflineDataset small_dataset()
{
    Rng rng = make_rng(3);
    std::vector<data::Trajectory> ts;
    for (int i = 0; i < 3; ++i) {
        data::Trajectory t;
        for (int k = 0; k <= 5; ++k) t.states.push_back(standard_normal(rng, 2, 1).col(0));
        for (int k = 0; k < 5; ++k) {
            t.actions.push_back(uniform(rng, 1, 1, -1, 1).col(0));
            t.rewards.push_back(standard_normal(rng, 1, 1)(0, 0));
        }
        t.terminal = i == 0;
        ts.push_back(std::move(t));
    }
    return data::OfflineDataset(data::DatasetMeta{"pointmass1d", 2, 1, {}}, std::move(ts));
}

} // namespace

TEST_SUITE("muzero")
{
    TEST_CASE("n-step targets")
    {
        const auto ten = [](const Vec&) { return 10.0; };
        CHECK(nstep_target(rewards_traj({1, 1, 5}, false), 0, 2, 0.9, ten) == doctest::Approx(10.0));
        CHECK(nstep_target(rewards_traj({1, 1}, true), 0, 5, 0.9, ten) == doctest::Approx(1.9));
        CHECK(nstep_target(rewards_traj({1, 1}, false), 0, 5, 0.9, ten) == doctest::Approx(1.9 + 0.81 * 10.0));
        CHECK(nstep_target(rewards_traj({3, 7, 5}, false), 1, 1, 0.0, ten) == 7.0);
        CHECK(nstep_target(rewards_traj({3, 7}, true), 2, 4, 0.9, ten) == 0.0);
        CHECK_THROWS_AS(nstep_target(rewards_traj({1}, false), 0, 0, 0.9, ten), ContractViolation);
    }

    TEST_CASE("ucb and tie-break")
    {
        CHECK(select_child({0.0, 0.0, 0.0}) == 0);
        CHECK(select_child({0.1, 0.5, 0.5}) == 1);
        CHECK(ucb_score(0.0, 0.5, 0, 0, 1.25, 19652.0) == 0.0);
        const double n = 4.0;
        CHECK(ucb_score(0.3, 0.5, 4, 1, 1.25, 19652.0) ==
              doctest::Approx(0.3 + 0.5 * std::sqrt(n) / 2.0 * (1.25 + std::log((n + 19653.0) / 19652.0))));

        // Fresh root with two distinct actions: the first simulation goes to sample 0.
        const BanditModel bandit(0);
        SearchConfig cfg;
        cfg.num_samples = 2;
        cfg.simulations = 1;
        Rng rng = make_rng(0);
        const auto r = sampled_mcts(bandit, Vec(Vec::Zero(1)), cfg, rng);
        REQUIRE(r.visits.size() == 2);
        CHECK(r.visits[0] == 1);
        CHECK(r.visits[1] == 0);

        SearchResult tie;
        tie.actions = (Mat(1, 3) << 0.1, 0.2, 0.3).finished();
        tie.visits = {2, 5, 5};
        CHECK(tie.best_action()[0] == 0.2);
    }

    TEST_CASE("min-max normalisation")
    {
        MinMaxStats s;
        CHECK(s.normalize(3.0) == 0.0);
        s.update(1.0);
        CHECK(s.degenerate());
        s.update(3.0);
        CHECK(s.normalize(2.0) == 0.5);
        CHECK(s.normalize(5.0) == 1.0);
    }

    TEST_CASE("single sample gives a point mass")
    {
        const WorldModel model(2, 1, tiny_mz(1), 1);
        SearchConfig cfg;
        cfg.num_samples = 1;
        for (int sims : {1, 7, 30}) {
            cfg.simulations = sims;
            Rng rng = make_rng(sims);
            const auto r = sampled_mcts(model, Vec(Vec::Zero(2)), cfg, rng);
            REQUIRE(r.visits.size() == 1);
            CHECK(r.visits[0] == sims);
            CHECK(r.policy[0] == 1.0);
        }
    }

    TEST_CASE("visit counts sum to the simulations")
    {
        const WorldModel model(2, 1, tiny_mz(2), 2);
        SearchConfig cfg;
        cfg.num_samples = 6;
        cfg.simulations = 40;
        Rng rng = make_rng(4);
        const Mat obs = standard_normal(rng, 2, 5);
        for (const auto& r : sampled_mcts(model, obs, cfg, rng)) {
            CHECK(std::accumulate(r.visits.begin(), r.visits.end(), 0) == 40);
            CHECK(r.policy.sum() == doctest::Approx(1.0));
            CHECK(r.prior.sum() == doctest::Approx(1.0));
            CHECK(std::isfinite(r.root_value));
        }
    }

    TEST_CASE("search respects the bandit optimum")
    {
        SearchConfig cfg;
        cfg.num_samples = BanditModel::kArms;
        cfg.simulations = 200;
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const BanditModel bandit(seed);
            Rng rng = make_rng(seed);
            const auto r = sampled_mcts(bandit, Vec(Vec::Zero(1)), cfg, rng);
            const auto most = std::max_element(r.visits.begin(), r.visits.end()) - r.visits.begin();
            hits += most == bandit.best_arm();
        }
        CHECK(hits >= 19);
    }

    TEST_CASE("zero simulations are rejected")
    {
        const WorldModel model(2, 1, tiny_mz(1), 1);
        SearchConfig cfg;
        cfg.simulations = 0;
        Rng rng = make_rng(0);
        CHECK_THROWS_AS(sampled_mcts(model, Vec(Vec::Zero(2)), cfg, rng), ConfigError);
        ChoiceConfig c = tiny_mz(0);
        c.mz_simulations = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        CHECK_THROWS_AS(make_muzero_state(2, 1, c), ConfigError);
    }

    TEST_CASE("unroll loss with no unroll steps has no reward term")
    {
        const ChoiceConfig c = tiny_mz(3);
        WorldModel model(2, 1, c, 3);
        const int last = model.f.spec().num_layers() - 1;
        model.f.weight(last).setZero();
        model.f.bias(last) << 0.0, 0.0, 0.7, 1.5; // mean, log_std, reward, value
        UnrollBatch ub;
        ub.num_samples = 2;
        ub.obs = Mat::Zero(2, 3);
        ub.value_target = Mat::Constant(1, 3, 1.5);
        ub.value_mask = Mat::Ones(1, 3);
        ub.reward_target = Mat::Constant(1, 3, 100.0);
        ub.reward_mask = Mat::Ones(1, 3);
        ub.policy_mask = Mat::Ones(1, 3);
        ub.policy_actions = {Mat::Zero(1, 6)};
        ub.policy_probs = {Mat::Constant(2, 3, 0.5)};
        const auto l = unroll_loss(model, ub);
        CHECK(l.reward == 0.0);
        CHECK(l.value == 0.0);
        CHECK(l.total == doctest::Approx(l.policy));

        // Perfect reward predictions with one unroll step.
        ub.actions = {Mat::Zero(1, 3)};
        ub.value_target = Mat::Constant(2, 3, 1.5);
        ub.value_mask = Mat::Ones(2, 3);
        ub.reward_target = Mat::Constant(2, 3, 0.7);
        ub.reward_mask = Mat::Ones(2, 3);
        ub.policy_mask = Mat::Ones(2, 3);
        ub.policy_actions.push_back(Mat::Zero(1, 6));
        ub.policy_probs.push_back(Mat::Constant(2, 3, 0.5));
        const auto l1 = unroll_loss(model, ub);
        CHECK(l1.reward == 0.0);
        CHECK(l1.value == 0.0);
    }

    TEST_CASE("unroll batches pad past the end of a trajectory")
    {
        ChoiceConfig c = tiny_mz(4);
        c.mz_unroll_steps = 8; // longer than every trajectory
        const auto ds = small_dataset();
        const WorldModel target(2, 1, c, 4);
        Rng pos = make_rng(1), search = make_rng(2);
        const auto ub = make_unroll_batch(ds, target, c, 6, pos, search);
        CHECK(ub.unroll_steps() == 8);
        for (int b = 0; b < 6; ++b) {
            CHECK(ub.policy_mask(0, b) == 1.0);
            CHECK(ub.policy_mask(8, b) == 0.0);
            CHECK(ub.policy_probs[0].col(b).sum() == doctest::Approx(1.0));
        }
        CHECK(std::isfinite(unroll_loss(target, ub).total));
    }

    TEST_CASE("training is deterministic in the seed")
    {
        const auto ds = small_dataset();
        const ChoiceConfig c = tiny_mz(5);
        auto a = make_muzero_state(2, 1, c);
        auto b = make_muzero_state(2, 1, c);
        Rng ra = make_rng(5, 1), rb = make_rng(5, 1);
        for (int i = 0; i < 4; ++i) {
            const auto la = muzero_update(a, ds, ra);
            const auto lb = muzero_update(b, ds, rb);
            REQUIRE(la.size() == lb.size());
            for (std::size_t k = 0; k < la.size(); ++k) CHECK(la[k].second == lb[k].second);
        }
        CHECK(a.model.f.values() == b.model.f.values());
        CHECK(a.model.g.values() == b.model.g.values());
    }
}
