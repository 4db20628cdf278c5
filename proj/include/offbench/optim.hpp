#pragma once

#include <string>
#include <string_view>

#include "offbench/nn.hpp"

namespace offbench::nn {

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view s);

struct AdamState {
    Vec m;
    Vec v;
    long t = 0;
    double base_lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LrSchedule schedule = LrSchedule::constant;
    long total_steps = 0;

    /// Throws ConfigError for a cosine schedule without a horizon.
    static AdamState create(Eigen::Index n, double base_lr, LrSchedule schedule = LrSchedule::constant,
                            long total_steps = 0);

    /// Learning rate the next step will use.
    double effective_lr() const;
};

/// One bias-corrected Adam step; params and grad must match the state length.
void adam_step(AdamState& state, Eigen::Ref<Vec> params, const Eigen::Ref<const Vec>& grad);
void adam_step(AdamState& state, ParamSet& params, const Eigen::Ref<const Vec>& grad);

struct TargetUpdate {
    enum class Mode { polyak, hard };
    Mode mode = Mode::polyak;
    double rho = 0.995;
    long period = 200;

    void validate() const;
};

/// polyak: target <- rho*target + (1-rho)*online each call; hard: copy when step % period == 0.
void target_update(ParamSet& target, const ParamSet& online, const TargetUpdate& rule, long step);

} // namespace offbench::nn
