#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "offbench/checkpoint.hpp"
#include "offbench/errors.hpp"
#include "offbench/nn.hpp"
#include "offbench/optim.hpp"
#include "offbench/rng.hpp"

using namespace offbench;
using namespace offbench::nn;

namespace {

NetSpec spec_of(int in, std::vector<int> hidden, int out, Activation act = Activation::relu, bool ln = false,
                InitScheme init = InitScheme::lecun_normal)
{
    NetSpec s;
    s.input_dim = in;
    s.hidden_dims = std::move(hidden);
    s.output_dim = out;
    s.activation = act;
    s.layer_norm = ln;
    s.init = init;
    return s;
}

// Straight-line re-implementation used as an oracle.
Vec naive_forward(const ParamSet& p, const Vec& x)
{
    const NetSpec& s = p.spec();
    Vec h = x;
    for (int l = 0; l < s.num_layers(); ++l) {
        Vec z = p.bias(l);
        for (int i = 0; i < z.size(); ++i)
            for (int j = 0; j < h.size(); ++j) z[i] += p.weight(l)(i, j) * h[j];
        if (l + 1 == s.num_layers()) return z;
        if (s.layer_norm) {
            double m = 0.0;
            for (int i = 0; i < z.size(); ++i) m += z[i];
            m /= static_cast<double>(z.size());
            double var = 0.0;
            for (int i = 0; i < z.size(); ++i) var += (z[i] - m) * (z[i] - m);
            var /= static_cast<double>(z.size());
            for (int i = 0; i < z.size(); ++i)
                z[i] = p.ln_gain(l)[i] * (z[i] - m) / std::sqrt(var + kLayerNormEps) + p.ln_bias(l)[i];
        }
        for (int i = 0; i < z.size(); ++i) {
            if (s.activation == Activation::relu)
                z[i] = z[i] > 0.0 ? z[i] : 0.0;
            else
                z[i] = z[i] > 0.0 ? z[i] : std::exp(z[i]) - 1.0;
        }
        h = z;
    }
    return h;
}

} // namespace

TEST_SUITE("nn")
{
    TEST_CASE("spec validation")
    {
        CHECK_THROWS_AS(spec_of(0, {4}, 1).validate(), ConfigError);
        CHECK_THROWS_AS(spec_of(2, {}, 1).validate(), ConfigError);
        CHECK_THROWS_AS(spec_of(2, {4, 0}, 1).validate(), ConfigError);
        CHECK_NOTHROW(spec_of(2, {4}, 1).validate());
    }

    TEST_CASE("flat layout and round trip")
    {
        const NetSpec s = spec_of(3, {5, 4}, 2, Activation::elu, true);
        ParamSet p = init_params(s, 3, 2);
        const Eigen::Index expected = (3 * 5 + 5 + 2 * 5) + (5 * 4 + 4 + 2 * 4) + (4 * 2 + 2) + 2;
        CHECK(p.size() == expected);
        CHECK(p.aux_size() == 2);
        p.aux() << 0.25, -0.5;
        const ParamSet q = ParamSet::unflatten(s, p.flatten(), 2);
        CHECK(q.values() == p.values());
        CHECK(q.weight(1) == p.weight(1));
        CHECK(q.aux()[1] == -0.5);
        CHECK_THROWS_AS(ParamSet::unflatten(s, Vec::Zero(expected - 1), 2), ContractViolation);
    }

    TEST_CASE("lecun normal variance")
    {
        const ParamSet p = init_params(spec_of(256, {256}, 1), 0);
        const auto w = p.weight(1);
        const double mean = w.mean();
        const double var = (w.array() - mean).square().mean();
        CHECK(var == doctest::Approx(1.0 / 256).epsilon(0.2));
        CHECK(p.bias(0).isZero());
    }

    TEST_CASE("orthogonal last layer")
    {
        const ParamSet one = init_params(spec_of(2, {1}, 1, Activation::relu, false, InitScheme::orthogonal_0_01), 4);
        CHECK(std::abs(one.weight(1)(0, 0)) == doctest::Approx(0.01).epsilon(1e-12));
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const ParamSet p = init_params(spec_of(3, {16, 8}, 4, Activation::relu, false, InitScheme::orthogonal_1_41), seed);
            const Mat wwt = p.weight(2) * p.weight(2).transpose();
            CHECK((wwt - 1.41 * 1.41 * Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-6);
        }
    }

    TEST_CASE("init is deterministic in the seed")
    {
        const NetSpec s = spec_of(3, {8}, 2);
        CHECK(init_params(s, 7).values() == init_params(s, 7).values());
        CHECK(init_params(s, 7).values() != init_params(s, 8).values());
    }

    TEST_CASE("forward examples")
    {
        ParamSet zero(spec_of(3, {4, 4}, 2));
        CHECK(forward_one(zero, Vec::Constant(3, 1.7)).isZero());

        ParamSet chain(spec_of(1, {1, 1}, 1));
        for (int l = 0; l < 3; ++l) chain.weight(l)(0, 0) = 1.0;
        CHECK(forward_one(chain, Vec::Constant(1, 2.0))[0] == 2.0);

        CHECK_THROWS_AS(forward_one(zero, Vec::Zero(2)), ContractViolation);
    }

    TEST_CASE("forward matches the naive oracle")
    {
        Rng rng = make_rng(0);
        for (bool ln : {false, true})
            for (auto act : {Activation::relu, Activation::elu}) {
                const ParamSet p = init_params(spec_of(2, {4}, 1, act, ln), 0);
                const ParamSet q = init_params(spec_of(3, {8, 8}, 2, act, ln), 1);
                for (int i = 0; i < 10; ++i) {
                    const Vec x = standard_normal(rng, 2, 1).col(0);
                    CHECK(std::abs(forward_one(p, x)[0] - naive_forward(p, x)[0]) < 1e-12);
                    const Vec y = standard_normal(rng, 3, 1).col(0);
                    CHECK((forward_one(q, y) - naive_forward(q, y)).cwiseAbs().maxCoeff() < 1e-12);
                }
            }
    }

    TEST_CASE("batched forward equals per-column forward and is pure")
    {
        Rng rng = make_rng(1);
        const ParamSet p = init_params(spec_of(3, {8, 8}, 2, Activation::elu, true), 2);
        const Mat x = standard_normal(rng, 3, 5);
        const Mat y = forward(p, x);
        for (int j = 0; j < 5; ++j) CHECK((y.col(j) - forward_one(p, x.col(j))).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(forward(p, x) == y);
    }

    TEST_CASE("backward examples")
    {
        ParamSet p(spec_of(1, {1}, 1));
        p.weight(0)(0, 0) = 2.0;
        p.weight(1)(0, 0) = 3.0;
        Tape tape;
        forward(p, Mat::Constant(1, 1, 1.0), &tape);
        const Vec g = backward(tape, Mat::Constant(1, 1, 1.0));
        const auto& idx = p.index_map();
        CHECK(g[idx[0].weight] == doctest::Approx(3.0));
        CHECK(g[idx[1].weight] == doctest::Approx(2.0));
        CHECK(backward(tape, Mat::Zero(1, 1)).isZero());
    }

    TEST_CASE("relu subgradient at zero is zero")
    {
        ParamSet p(spec_of(1, {1}, 1));
        p.weight(1)(0, 0) = 1.0; // hidden pre-activation is exactly 0
        Tape tape;
        forward(p, Mat::Constant(1, 1, 1.0), &tape);
        const Vec g = backward(tape, Mat::Constant(1, 1, 1.0));
        CHECK(g[p.index_map()[0].weight] == 0.0);
        CHECK(g[p.index_map()[0].bias] == 0.0);
    }

    TEST_CASE("stale tape is rejected")
    {
        ParamSet p = init_params(spec_of(2, {4}, 1), 0);
        Tape tape;
        forward(p, Mat::Ones(2, 1), &tape);
        p.mutable_values()[0] += 1.0;
        CHECK_THROWS_AS(backward(tape, Mat::Ones(1, 1)), ContractViolation);
    }

    TEST_CASE("layer norm")
    {
        const Vec y = layer_norm((Vec(3) << 1, 2, 3).finished(), Vec::Ones(3), Vec::Zero(3));
        CHECK(y[0] == doctest::Approx(-1.22472).epsilon(1e-5));
        CHECK(y[1] == doctest::Approx(0.0));
        CHECK(y[2] == doctest::Approx(1.22472).epsilon(1e-5));
        const Vec b = (Vec(3) << 0.1, 0.2, 0.3).finished();
        CHECK((layer_norm(Vec::Constant(3, 5.0), Vec::Ones(3), b) - b).cwiseAbs().maxCoeff() < 1e-15);
        Rng rng = make_rng(3);
        for (int i = 0; i < 20; ++i) {
            const Vec x = 3.0 * standard_normal(rng, 16, 1).col(0);
            const Vec z = layer_norm(x, Vec::Ones(16), Vec::Zero(16));
            CHECK(std::abs(z.mean()) < 1e-9);
            CHECK((z.array() - z.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-3));
        }
    }

    TEST_CASE("adam first step and cosine schedule")
    {
        AdamState st = AdamState::create(1, 3e-4);
        Vec w = Vec::Constant(1, 1.0);
        adam_step(st, w, Vec::Constant(1, 0.5));
        CHECK(w[0] - 1.0 == doctest::Approx(-2.99999e-4).epsilon(1e-4));
        CHECK(st.t == 1);

        CHECK_THROWS_AS(AdamState::create(1, 1e-3, LrSchedule::cosine, 0), ConfigError);
        AdamState c = AdamState::create(1, 1e-3, LrSchedule::cosine, 100);
        CHECK(c.effective_lr() == 1e-3);
        double prev = c.effective_lr();
        Vec x = Vec::Zero(1);
        for (int t = 0; t < 100; ++t) {
            if (t == 50) CHECK(c.effective_lr() == doctest::Approx(5e-4).epsilon(1e-12));
            adam_step(c, x, Vec::Ones(1));
            CHECK(c.effective_lr() <= prev);
            prev = c.effective_lr();
        }
        CHECK(c.effective_lr() == doctest::Approx(0.0));
    }

    TEST_CASE("adam descends a quadratic")
    {
        AdamState st = AdamState::create(1, 3e-4);
        Vec w = Vec::Constant(1, 1.0);
        double prev = 1.0;
        int increases = 0;
        for (int t = 0; t < 100; ++t) {
            adam_step(st, w, 2.0 * w);
            if (std::abs(w[0]) >= prev) ++increases;
            prev = std::abs(w[0]);
        }
        CHECK(increases == 0);
        // Far from the optimum each step moves by about the learning rate.
        CHECK(w[0] == doctest::Approx(1.0 - 100 * 3e-4).epsilon(1e-3));
    }

    TEST_CASE("target updates")
    {
        ParamSet online(spec_of(1, {1}, 1));
        ParamSet target(spec_of(1, {1}, 1));
        online.mutable_values().setOnes();
        TargetUpdate keep{TargetUpdate::Mode::polyak, 1.0, 1};
        target_update(target, online, keep, 1);
        CHECK(target.values().isZero());
        TargetUpdate soft{TargetUpdate::Mode::polyak, 0.995, 1};
        target_update(target, online, soft, 1);
        CHECK(target.values()[0] == doctest::Approx(0.005));
        TargetUpdate copy{TargetUpdate::Mode::polyak, 0.0, 1};
        target_update(target, online, copy, 1);
        CHECK(target.values() == online.values());

        ParamSet t2(spec_of(1, {1}, 1));
        TargetUpdate hard{TargetUpdate::Mode::hard, 1.0, 3};
        target_update(t2, online, hard, 1);
        target_update(t2, online, hard, 2);
        CHECK(t2.values().isZero());
        target_update(t2, online, hard, 3);
        CHECK(t2.values() == online.values());

        CHECK_THROWS_AS((TargetUpdate{TargetUpdate::Mode::polyak, 1.5, 1}.validate()), ConfigError);
    }

    TEST_CASE("checkpoint round trip")
    {
        const auto dir = std::filesystem::temp_directory_path() / "offbench_nn_ckpt";
        std::filesystem::create_directories(dir);
        const ParamSet p = init_params(spec_of(3, {8, 8}, 2, Activation::elu, true, InitScheme::orthogonal_1_41), 5, 2);
        save_checkpoint(dir / "a.ckpt", p, {{"note", "x"}});
        const auto loaded = load_checkpoint(dir / "a.ckpt");
        CHECK(loaded.params.values() == p.values());
        CHECK(loaded.params.spec() == p.spec());
        CHECK(loaded.params.aux_size() == 2);
        CHECK(loaded.extra.at("note") == "x");

        std::ofstream(dir / "bad.ckpt") << "not json\n";
        CHECK_THROWS(load_checkpoint(dir / "bad.ckpt"));
        std::filesystem::remove_all(dir);
    }
}
