#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "offbench/rng.hpp"

namespace offbench::env {

using Vec = Eigen::VectorXd;

enum class EnvId { pointmass1d, swingup };

std::string to_string(EnvId id);
EnvId parse_env_id(std::string_view s);

inline constexpr int kHorizon = 200;
inline constexpr double kDt = 0.05;

int obs_dim(EnvId id);
inline constexpr int act_dim(EnvId) { return 1; }

/// pointmass1d raw = [x, v]; swingup raw = [theta, theta_dot] with theta = 0 upright.
struct EnvState {
    EnvId env = EnvId::pointmass1d;
    Eigen::Vector2d raw = Eigen::Vector2d::Zero();
    int step = 0;
};

struct StepResult {
    EnvState next;
    double reward = 0.0;
    bool done = false; // horizon truncation only
};

/// Pure dynamics. Throws ContractViolation for |action| > 1 or a finished episode.
StepResult env_step(const EnvState& state, const Vec& action);
EnvState env_reset(EnvId id, Rng& rng);
Vec observe(const EnvState& state);

/// Maps an angle to (-pi, pi].
double wrap_angle(double theta);

} // namespace offbench::env
