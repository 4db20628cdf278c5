#include "offbench/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "offbench/errors.hpp"

namespace offbench::env {

namespace {

constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;

} // namespace

std::string to_string(EnvId id)
{
    return id == EnvId::pointmass1d ? "pointmass1d" : "swingup";
}

EnvId parse_env_id(std::string_view s)
{
    if (s == "pointmass1d") return EnvId::pointmass1d;
    if (s == "swingup") return EnvId::swingup;
    throw ConfigError("env", "unknown environment '" + std::string(s) + "'");
}

int obs_dim(EnvId id)
{
    return id == EnvId::pointmass1d ? 2 : 3;
}

double wrap_angle(double theta)
{
    double w = std::remainder(theta, 2.0 * std::numbers::pi); // [-pi, pi]
    if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
    return w;
}

StepResult env_step(const EnvState& state, const Vec& action)
{
    if (action.size() != 1 || !std::isfinite(action[0]) || std::abs(action[0]) > 1.0)
        throw ContractViolation("env_step: action must be a finite scalar in [-1, 1]");
    if (state.step >= kHorizon) throw ContractViolation("env_step: episode already finished");
    const double a = action[0];
    StepResult out;
    out.next = state;
    out.next.step = state.step + 1;
    if (state.env == EnvId::pointmass1d) {
        const double v = std::clamp(state.raw[1] + a * kDt, -2.0, 2.0);
        const double x = std::clamp(state.raw[0] + v * kDt, -3.0, 3.0);
        out.next.raw = {x, v};
        out.reward = -(x * x + 0.1 * v * v + 0.001 * a * a);
    } else {
        const double u = kMaxTorque * a;
        const double theta = state.raw[0];
        const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta) + 3.0 / (kMass * kLength * kLength) * u;
        const double theta_dot = std::clamp(state.raw[1] + acc * kDt, -kMaxSpeed, kMaxSpeed);
        const double next_theta = theta + theta_dot * kDt;
        out.next.raw = {next_theta, theta_dot};
        const double w = wrap_angle(next_theta);
        out.reward = -(w * w + 0.1 * theta_dot * theta_dot + 0.001 * u * u);
    }
    out.done = out.next.step >= kHorizon;
    return out;
}

EnvState env_reset(EnvId id, Rng& rng)
{
    EnvState s;
    s.env = id;
    s.step = 0;
    if (id == EnvId::pointmass1d) {
        std::uniform_real_distribution<double> ux(-1.0, 1.0);
        s.raw = {ux(rng), 0.0};
    } else {
        std::uniform_real_distribution<double> ut(-std::numbers::pi, std::numbers::pi);
        std::uniform_real_distribution<double> uv(-1.0, 1.0);
        const double theta = ut(rng);
        s.raw = {theta, uv(rng)};
    }
    return s;
}

Vec observe(const EnvState& state)
{
    if (state.env == EnvId::pointmass1d) return Vec(state.raw);
    Vec o(3);
    o << std::cos(state.raw[0]), std::sin(state.raw[0]), state.raw[1] / kMaxSpeed;
    return o;
}

} // namespace offbench::env
