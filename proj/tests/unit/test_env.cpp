#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include "offbench/env.hpp"
#include "offbench/errors.hpp"
#include "offbench/eval.hpp"

using namespace offbench;
using namespace offbench::env;

namespace {

Vec act(double a)
{
    return Vec::Constant(1, a);
}

EnvState state(EnvId id, double x0, double x1, int step = 0)
{
    EnvState s;
    s.env = id;
    s.raw = {x0, x1};
    s.step = step;
    return s;
}

} // namespace

TEST_SUITE("env")
{
    TEST_CASE("pointmass examples")
    {
        const auto r = env_step(state(EnvId::pointmass1d, 0.0, 0.0), act(1.0));
        CHECK(r.next.raw[1] == doctest::Approx(0.05));
        CHECK(r.next.raw[0] == doctest::Approx(0.0025));
        CHECK(r.reward == doctest::Approx(-(0.0025 * 0.0025 + 0.1 * 0.0025 + 0.001)));
        const auto rest = env_step(state(EnvId::pointmass1d, 0.0, 0.0), act(0.0));
        CHECK(rest.next.raw[0] == 0.0);
        CHECK(rest.next.raw[1] == 0.0);
        CHECK(rest.reward == 0.0);
        const auto wall = env_step(state(EnvId::pointmass1d, 3.0, 2.0), act(1.0));
        CHECK(wall.next.raw[0] == 3.0);
        CHECK(wall.next.raw[1] == 2.0);
    }

    TEST_CASE("swingup examples")
    {
        const auto up = env_step(state(EnvId::swingup, 0.0, 0.0), act(0.0));
        CHECK(up.reward == 0.0);
        CHECK(up.next.raw[1] == 0.0);
        const auto down = env_step(state(EnvId::swingup, std::numbers::pi, 0.0), act(0.0));
        CHECK(down.reward == doctest::Approx(-std::numbers::pi * std::numbers::pi).epsilon(1e-9));
        const auto fast = env_step(state(EnvId::swingup, 1.0, 8.0), act(1.0));
        CHECK(fast.next.raw[1] == 8.0);
        const Vec o = observe(state(EnvId::swingup, 0.0, 4.0));
        CHECK(o[0] == 1.0);
        CHECK(o[1] == 0.0);
        CHECK(o[2] == 0.5);
    }

    TEST_CASE("wrap_angle")
    {
        CHECK(wrap_angle(0.0) == 0.0);
        CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
        CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
        CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
        for (double t = -20.0; t < 20.0; t += 0.37) {
            const double w = wrap_angle(t);
            CHECK(w > -std::numbers::pi);
            CHECK(w <= std::numbers::pi);
            CHECK(std::cos(w) == doctest::Approx(std::cos(t)));
            CHECK(std::sin(w) == doctest::Approx(std::sin(t)));
        }
    }

    TEST_CASE("invalid actions and finished episodes")
    {
        const auto s = state(EnvId::pointmass1d, 0.0, 0.0);
        CHECK_THROWS_AS(env_step(s, act(1.5)), ContractViolation);
        CHECK_THROWS_AS(env_step(s, act(std::numeric_limits<double>::quiet_NaN())), ContractViolation);
        CHECK_THROWS_AS(env_step(s, Vec::Zero(2)), ContractViolation);
        CHECK_THROWS_AS(env_step(state(EnvId::pointmass1d, 0, 0, kHorizon), act(0.0)), ContractViolation);
        CHECK_THROWS_AS(parse_env_id("cartpole"), ConfigError);
    }

    TEST_CASE("episodes end at the horizon")
    {
        for (auto id : {EnvId::pointmass1d, EnvId::swingup}) {
            Rng rng = make_rng(1);
            EnvState s = env_reset(id, rng);
            int steps = 0;
            bool done = false;
            while (!done) {
                const auto r = env_step(s, uniform(rng, 1, 1, -1, 1).col(0));
                s = r.next;
                done = r.done;
                ++steps;
            }
            CHECK(steps == kHorizon);
        }
    }

    TEST_CASE("step is pure and rewards are bounded")
    {
        Rng rng = make_rng(2);
        const double pm_bound = 9.0 + 0.1 * 4.0 + 0.001;
        const double sw_bound = std::numbers::pi * std::numbers::pi + 0.1 * 64.0 + 0.001 * 4.0;
        for (auto id : {EnvId::pointmass1d, EnvId::swingup}) {
            EnvState s = env_reset(id, rng);
            for (int t = 0; t < 1000; ++t) {
                if (s.step >= kHorizon) s = env_reset(id, rng);
                const Vec a = uniform(rng, 1, 1, -1, 1).col(0);
                const EnvState before = s;
                const auto r1 = env_step(s, a);
                const auto r2 = env_step(s, a);
                CHECK(s.raw == before.raw);
                CHECK(r1.next.raw == r2.next.raw);
                CHECK(r1.reward == r2.reward);
                CHECK(r1.reward <= 0.0);
                CHECK(r1.reward >= -(id == EnvId::pointmass1d ? pm_bound : sw_bound));
                CHECK(observe(r1.next).size() == obs_dim(id));
                s = r1.next;
            }
        }
    }

    TEST_CASE("reset covers its range")
    {
        Rng rng = make_rng(3);
        double lo = 1.0, hi = -1.0;
        double tlo = 10.0, thi = -10.0;
        for (int i = 0; i < 10000; ++i) {
            const auto p = env_reset(EnvId::pointmass1d, rng);
            CHECK(p.raw[1] == 0.0);
            lo = std::min(lo, p.raw[0]);
            hi = std::max(hi, p.raw[0]);
            const auto w = env_reset(EnvId::swingup, rng);
            CHECK(std::abs(w.raw[1]) <= 1.0);
            tlo = std::min(tlo, w.raw[0]);
            thi = std::max(thi, w.raw[0]);
        }
        CHECK(lo < -0.99);
        CHECK(hi > 0.99);
        CHECK(tlo < -3.1);
        CHECK(thi > 3.1);
    }
}

TEST_SUITE("eval")
{
    TEST_CASE("running average examples")
    {
        const auto r = eval::running_average({10, 20, 30, 40}, 3);
        CHECK(r.back() == doctest::Approx(30.0));
        CHECK(r[0] == 10.0);
        CHECK(r[1] == 15.0);
        const auto s = eval::summarize({10, 40, 20, 30}, 3);
        CHECK(s.last_avg == 30.0);
        CHECK(s.best_avg == 40.0);
        CHECK(s.last_running_avg == 30.0);
        CHECK_THROWS_AS(eval::summarize({}, 3), ContractViolation);
    }

    TEST_CASE("running average matches a naive oracle and is linear")
    {
        Rng rng = make_rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 1 + static_cast<int>(rng() % 30);
            const int L = 1 + static_cast<int>(rng() % 12);
            std::vector<double> x(n), y(n), z(n);
            for (int i = 0; i < n; ++i) {
                x[i] = standard_normal(rng, 1, 1)(0, 0) * 100;
                y[i] = standard_normal(rng, 1, 1)(0, 0) * 100;
                z[i] = 2.5 * x[i] - 0.5 * y[i];
            }
            const auto rx = eval::running_average(x, L);
            const auto ry = eval::running_average(y, L);
            const auto rz = eval::running_average(z, L);
            for (int t = 0; t < n; ++t) {
                double sum = 0.0;
                int cnt = 0;
                for (int i = std::max(0, t - L + 1); i <= t; ++i, ++cnt) sum += x[i];
                CHECK(rx[t] == doctest::Approx(sum / cnt).epsilon(1e-12));
                CHECK(rz[t] == doctest::Approx(2.5 * rx[t] - 0.5 * ry[t]).epsilon(1e-9));
            }
            const auto s = eval::summarize(x, L);
            CHECK(s.best_avg >= s.last_avg);
        }
    }

    TEST_CASE("normalized score")
    {
        CHECK(eval::normalized_score(-100.0, -200.0, 0.0) == doctest::Approx(50.0));
        CHECK(eval::normalized_score(-200.0, -200.0, 0.0) == 0.0);
        CHECK_THROWS_AS(eval::normalized_score(0.0, 1.0, 1.0), ContractViolation);
    }

    TEST_CASE("series validation and csv round trip")
    {
        eval::EvalSeries s(2);
        s.add(100, {1.0, 2.0});
        s.add(200, {0.1, 1.0 / 3.0});
        CHECK(s.means()[0] == 1.5);
        CHECK_THROWS_AS(s.add(200, {1.0}), ContractViolation);
        CHECK_THROWS_AS(s.add(300, {}), ContractViolation);
        const auto path = std::filesystem::temp_directory_path() / "offbench_eval.csv";
        eval::write_eval_csv(path, s);
        const auto back = eval::read_eval_csv(path, 2);
        REQUIRE(back.size() == 2);
        CHECK(back.points()[1].returns == s.points()[1].returns);
        CHECK(back.means() == s.means());
        std::filesystem::remove(path);
    }

    TEST_CASE("evaluate is deterministic and uses per-episode streams")
    {
        const eval::Policy zero = [](const Vec&) { return Vec::Zero(1); };
        const auto a = eval::evaluate(zero, EnvId::pointmass1d, 5, 7);
        const auto b = eval::evaluate(zero, EnvId::pointmass1d, 5, 7);
        CHECK(a.returns == b.returns);
        CHECK(a.returns.size() == 5);
        const auto c = eval::evaluate(zero, EnvId::pointmass1d, 3, 7);
        for (int i = 0; i < 3; ++i) CHECK(c.returns[i] == a.returns[i]);
        CHECK_THROWS_AS(eval::evaluate(zero, EnvId::pointmass1d, 0, 7), ContractViolation);
    }
}
