#include "offbench/policy.hpp"

#include <cmath>
#include <numbers>

#include "offbench/errors.hpp"

namespace offbench::policy {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|.
double log1m_tanh2(double u)
{
    return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

void check_head(const PolicyHeadOutput& head)
{
    if (head.mean.size() != head.log_std.size()) throw ContractViolation("policy head: mean/log_std size mismatch");
}

} // namespace

std::string to_string(Squash s)
{
    return s == Squash::tanh_squash ? "tanh_squash" : "clipped_tanh_mean";
}

std::string to_string(VarianceSource v)
{
    return v == VarianceSource::state_dependent ? "state_dependent" : "shared_parameter";
}

Squash parse_squash(std::string_view s)
{
    if (s == "tanh_squash") return Squash::tanh_squash;
    if (s == "clipped_tanh_mean") return Squash::clipped_tanh_mean;
    throw ConfigError("squash", "unknown squash mode '" + std::string(s) + "'");
}

VarianceSource parse_variance_source(std::string_view s)
{
    if (s == "state_dependent") return VarianceSource::state_dependent;
    if (s == "shared_parameter") return VarianceSource::shared_parameter;
    throw ConfigError("variance_source", "unknown variance source '" + std::string(s) + "'");
}

PolicyHeadOutput PolicyHeadOutput::from_raw(Vec mean, const Vec& raw_log_std, Squash mode, VarianceSource source)
{
    PolicyHeadOutput h;
    h.mean = std::move(mean);
    h.log_std = raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    h.mode = mode;
    h.variance_source = source;
    check_head(h);
    return h;
}

ReparamSample reparam_sample(const PolicyHeadOutput& head, const Vec& noise)
{
    check_head(head);
    if (noise.size() != head.dim()) throw ContractViolation("reparam_sample: noise dimension mismatch");
    ReparamSample s;
    s.noise = noise;
    const Vec sigma = head.log_std.array().exp();
    double lp = 0.0;
    if (head.mode == Squash::tanh_squash) {
        s.pre_squash = head.mean + sigma.cwiseProduct(noise);
        s.action = s.pre_squash.array().tanh();
        for (Eigen::Index d = 0; d < head.dim(); ++d)
            lp += -0.5 * noise[d] * noise[d] - head.log_std[d] - kHalfLog2Pi - log1m_tanh2(s.pre_squash[d]);
    } else {
        const Vec m = head.mean.array().tanh();
        s.pre_squash = m + sigma.cwiseProduct(noise);
        s.action = s.pre_squash.cwiseMax(-1.0).cwiseMin(1.0);
        for (Eigen::Index d = 0; d < head.dim(); ++d) {
            const double e = (s.action[d] - m[d]) / sigma[d];
            lp += -0.5 * e * e - head.log_std[d] - kHalfLog2Pi;
        }
    }
    s.log_prob = lp;
    return s;
}

Vec sample(const PolicyHeadOutput& head, Rng& rng)
{
    return reparam_sample(head, standard_normal(rng, head.dim(), 1).col(0)).action;
}

double log_prob(const PolicyHeadOutput& head, const Vec& action)
{
    check_head(head);
    if (action.size() != head.dim()) throw ContractViolation("log_prob: action dimension mismatch");
    if (!action.allFinite()) throw ContractViolation("log_prob: non-finite action");
    double lp = 0.0;
    for (Eigen::Index d = 0; d < head.dim(); ++d) {
        const double sigma = std::exp(head.log_std[d]);
        if (head.mode == Squash::tanh_squash) {
            const double a = std::clamp(action[d], -kActionClamp, kActionClamp);
            const double u = std::atanh(a);
            const double e = (u - head.mean[d]) / sigma;
            lp += -0.5 * e * e - head.log_std[d] - kHalfLog2Pi - std::log1p(-a * a);
        } else {
            const double a = std::clamp(action[d], -1.0, 1.0);
            const double e = (a - std::tanh(head.mean[d])) / sigma;
            lp += -0.5 * e * e - head.log_std[d] - kHalfLog2Pi;
        }
    }
    return lp;
}

Vec deterministic_action(const PolicyHeadOutput& head)
{
    return head.mean.array().tanh();
}

double entropy_estimate(const PolicyHeadOutput& head, Rng& rng, int n, bool squash_correction)
{
    if (n < 1) throw ContractViolation("entropy_estimate: n must be >= 1");
    check_head(head);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec z = standard_normal(rng, head.dim(), 1).col(0);
        const ReparamSample s = reparam_sample(head, z);
        if (squash_correction || head.mode != Squash::tanh_squash) {
            total += s.log_prob;
        } else {
            for (Eigen::Index d = 0; d < head.dim(); ++d)
                total += -0.5 * z[d] * z[d] - head.log_std[d] - kHalfLog2Pi;
        }
    }
    return -total / n;
}

HeadGrad reparam_backward(const PolicyHeadOutput& head, const ReparamSample& s, const Vec& d_action, double d_log_prob)
{
    const Eigen::Index dim = head.dim();
    HeadGrad g{Vec::Zero(dim), Vec::Zero(dim)};
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double sigma = std::exp(head.log_std[d]);
        const double z = s.noise[d];
        if (head.mode == Squash::tanh_squash) {
            const double a = s.action[d];
            const double du = d_action[d] * (1.0 - a * a) + d_log_prob * 2.0 * std::tanh(s.pre_squash[d]);
            g.d_mean[d] = du;
            g.d_log_std[d] = du * sigma * z - d_log_prob;
        } else {
            const double m = std::tanh(head.mean[d]);
            const double e = s.action[d] - m;
            const double inv_var = 1.0 / (sigma * sigma);
            const bool inside = std::abs(s.pre_squash[d]) < 1.0;
            const double da_total = d_action[d] + d_log_prob * (-e * inv_var);
            const double dm = (inside ? da_total : 0.0) + d_log_prob * e * inv_var;
            g.d_mean[d] = dm * (1.0 - m * m);
            g.d_log_std[d] = (inside ? da_total * sigma * z : 0.0) + d_log_prob * (e * e * inv_var - 1.0);
        }
    }
    return g;
}

HeadGrad log_prob_grad(const PolicyHeadOutput& head, const Vec& action)
{
    const Eigen::Index dim = head.dim();
    HeadGrad g{Vec::Zero(dim), Vec::Zero(dim)};
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double inv_var = std::exp(-2.0 * head.log_std[d]);
        if (head.mode == Squash::tanh_squash) {
            const double u = std::atanh(std::clamp(action[d], -kActionClamp, kActionClamp));
            const double e = u - head.mean[d];
            g.d_mean[d] = e * inv_var;
            g.d_log_std[d] = e * e * inv_var - 1.0;
        } else {
            const double m = std::tanh(head.mean[d]);
            const double e = std::clamp(action[d], -1.0, 1.0) - m;
            g.d_mean[d] = e * inv_var * (1.0 - m * m);
            g.d_log_std[d] = e * e * inv_var - 1.0;
        }
    }
    return g;
}

} // namespace offbench::policy
