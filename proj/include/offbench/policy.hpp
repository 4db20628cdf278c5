#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "offbench/rng.hpp"

namespace offbench::policy {

using Vec = Eigen::VectorXd;

enum class Squash { tanh_squash, clipped_tanh_mean };
enum class VarianceSource { state_dependent, shared_parameter };

std::string to_string(Squash s);
std::string to_string(VarianceSource v);
Squash parse_squash(std::string_view s);
VarianceSource parse_variance_source(std::string_view s);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kActionClamp = 1.0 - 1e-6;

/// Gaussian head for one state. `mean` is pre-squash; `log_std` is already clamped.
struct PolicyHeadOutput {
    Vec mean;
    Vec log_std;
    Squash mode = Squash::tanh_squash;
    VarianceSource variance_source = VarianceSource::state_dependent;

    /// Builds a head from raw network outputs, clamping log_std to [kLogStdMin, kLogStdMax].
    static PolicyHeadOutput from_raw(Vec mean, const Vec& raw_log_std, Squash mode,
                                     VarianceSource source = VarianceSource::state_dependent);
    Eigen::Index dim() const { return mean.size(); }
};

Vec sample(const PolicyHeadOutput& head, Rng& rng);

/// Exact log-density of `action`. tanh_squash clamps to +-kActionClamp first;
/// clipped_tanh_mean uses the unclipped Gaussian pdf at the (clipped) action.
double log_prob(const PolicyHeadOutput& head, const Vec& action);

/// tanh(mean) in both modes.
Vec deterministic_action(const PolicyHeadOutput& head);

/// -(1/n) sum log_prob(sample). With `squash_correction == false` the tanh_squash
/// Jacobian term is dropped, i.e. the estimate is of the pre-squash Gaussian.
double entropy_estimate(const PolicyHeadOutput& head, Rng& rng, int n, bool squash_correction = true);

/// Reparameterised draw for fixed standard-normal noise.
struct ReparamSample {
    Vec noise;
    Vec pre_squash; // tanh_squash: mu + sigma*z; clipped: tanh(mu) + sigma*z before clipping
    Vec action;
    double log_prob = 0.0;
};

ReparamSample reparam_sample(const PolicyHeadOutput& head, const Vec& noise);

/// Gradient of L(action, log_prob) w.r.t. (mean, log_std) given dL/daction and dL/dlog_prob.
/// Clipping in clipped mode is straight-through inside (-1, 1) and blocks outside.
struct HeadGrad {
    Vec d_mean;
    Vec d_log_std;
};

HeadGrad reparam_backward(const PolicyHeadOutput& head, const ReparamSample& s, const Vec& d_action,
                          double d_log_prob);

/// Gradient of log_prob(head, action) w.r.t. (mean, log_std) for a fixed action.
HeadGrad log_prob_grad(const PolicyHeadOutput& head, const Vec& action);

} // namespace offbench::policy
