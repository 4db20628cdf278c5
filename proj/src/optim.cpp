#include "offbench/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "offbench/errors.hpp"

namespace offbench::nn {

std::string to_string(LrSchedule s)
{
    return s == LrSchedule::constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(std::string_view s)
{
    if (s == "constant") return LrSchedule::constant;
    if (s == "cosine") return LrSchedule::cosine;
    throw ConfigError("lr_schedule", "unknown schedule '" + std::string(s) + "'");
}

AdamState AdamState::create(Eigen::Index n, double base_lr, LrSchedule schedule, long total_steps)
{
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("learning_rate", "must be positive");
    if (schedule == LrSchedule::cosine && total_steps <= 0)
        throw ConfigError("total_steps", "cosine schedule requires total_steps > 0");
    AdamState s;
    s.m = Vec::Zero(n);
    s.v = Vec::Zero(n);
    s.base_lr = base_lr;
    s.schedule = schedule;
    s.total_steps = total_steps;
    return s;
}

double AdamState::effective_lr() const
{
    if (schedule == LrSchedule::constant) return base_lr;
    if (total_steps <= 0) throw ConfigError("total_steps", "cosine schedule requires total_steps > 0");
    const double frac = std::min(static_cast<double>(t), static_cast<double>(total_steps)) /
                        static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(AdamState& state, Eigen::Ref<Vec> params, const Eigen::Ref<const Vec>& grad)
{
    if (params.size() != grad.size() || state.m.size() != params.size())
        throw ContractViolation("adam_step: length mismatch");
    const double lr = state.effective_lr();
    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void adam_step(AdamState& state, ParamSet& params, const Eigen::Ref<const Vec>& grad)
{
    adam_step(state, Eigen::Ref<Vec>(params.mutable_values()), grad);
}

void TargetUpdate::validate() const
{
    if (mode == Mode::polyak && !(rho >= 0.0 && rho <= 1.0))
        throw ConfigError("target_update.rho", "must lie in [0, 1]");
    if (mode == Mode::hard && period < 1) throw ConfigError("target_update.period", "must be >= 1");
}

void target_update(ParamSet& target, const ParamSet& online, const TargetUpdate& rule, long step)
{
    rule.validate();
    if (!(target.spec() == online.spec()) || target.size() != online.size())
        throw ContractViolation("target_update: mismatched networks");
    if (rule.mode == TargetUpdate::Mode::polyak) {
        if (rule.rho == 1.0) return;
        Vec& t = target.mutable_values();
        t = rule.rho * t + (1.0 - rule.rho) * online.values();
    } else if (step % rule.period == 0) {
        target.mutable_values() = online.values();
    }
}

} // namespace offbench::nn
