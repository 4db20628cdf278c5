#include "offbench/models.hpp"

#include <algorithm>

#include "offbench/checkpoint.hpp"
#include "offbench/errors.hpp"

namespace offbench::algo {

nn::NetSpec make_net_spec(const ChoiceConfig& cfg, int input_dim, int output_dim)
{
    nn::NetSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_dims = cfg.hidden_dims;
    spec.output_dim = output_dim;
    spec.activation = cfg.activation;
    spec.layer_norm = cfg.layer_norm;
    spec.init = cfg.init_scheme;
    return spec;
}

Actor::Actor(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed)
    : act_dim_(act_dim), squash_(cfg.squash), variance_(cfg.variance_source)
{
    const bool shared = variance_ == policy::VarianceSource::shared_parameter;
    const nn::NetSpec spec = make_net_spec(cfg, obs_dim, shared ? act_dim : 2 * act_dim);
    params = nn::init_params(spec, seed, shared ? act_dim : 0);
}

Actor::Actor(nn::ParamSet p, int act_dim, policy::Squash squash, policy::VarianceSource variance)
    : params(std::move(p)), act_dim_(act_dim), squash_(squash), variance_(variance)
{
    const bool shared = variance_ == policy::VarianceSource::shared_parameter;
    if (params.spec().output_dim != (shared ? act_dim : 2 * act_dim) || params.aux_size() != (shared ? act_dim : 0))
        throw ContractViolation("actor parameters do not match the head layout");
}

Actor::Forward Actor::forward(const Mat& states) const
{
    Forward f;
    const Mat out = nn::forward(params, states, &f.tape);
    f.mean = out.topRows(act_dim_);
    if (variance_ == policy::VarianceSource::state_dependent)
        f.raw_log_std = out.bottomRows(act_dim_);
    else
        f.raw_log_std = params.aux().replicate(1, states.cols());
    f.log_std = f.raw_log_std.cwiseMax(policy::kLogStdMin).cwiseMin(policy::kLogStdMax);
    return f;
}

policy::PolicyHeadOutput Actor::head(const Forward& f, Eigen::Index column) const
{
    policy::PolicyHeadOutput h;
    h.mean = f.mean.col(column);
    h.log_std = f.log_std.col(column);
    h.mode = squash_;
    h.variance_source = variance_;
    return h;
}

Vec Actor::backward(const Forward& f, const Mat& d_mean, const Mat& d_log_std) const
{
    const Mat masked = d_log_std.cwiseProduct(
        ((f.raw_log_std.array() > policy::kLogStdMin) && (f.raw_log_std.array() < policy::kLogStdMax))
            .cast<double>()
            .matrix());
    if (variance_ == policy::VarianceSource::state_dependent) {
        Mat dy(2 * act_dim_, d_mean.cols());
        dy.topRows(act_dim_) = d_mean;
        dy.bottomRows(act_dim_) = masked;
        return nn::backward(f.tape, dy);
    }
    Vec grad = nn::backward(f.tape, d_mean);
    grad.tail(act_dim_) += masked.rowwise().sum();
    return grad;
}

Mat Actor::deterministic(const Mat& states) const
{
    const Mat out = nn::forward(params, states);
    return out.topRows(act_dim_).array().tanh();
}

Vec Actor::act(const Vec& obs) const
{
    return deterministic(obs).col(0);
}

void Actor::save(const std::filesystem::path& path) const
{
    nn::save_checkpoint(path, params,
                        {{"kind", "actor"},
                         {"act_dim", act_dim_},
                         {"squash", policy::to_string(squash_)},
                         {"variance_source", policy::to_string(variance_)}});
}

Actor Actor::load(const std::filesystem::path& path)
{
    auto ck = nn::load_checkpoint(path);
    if (ck.extra.value("kind", "") != "actor") throw SchemaError(path.string() + " is not an actor checkpoint");
    return Actor(std::move(ck.params), ck.extra.at("act_dim").get<int>(),
                 policy::parse_squash(ck.extra.at("squash").get<std::string>()),
                 policy::parse_variance_source(ck.extra.at("variance_source").get<std::string>()));
}

BatchSample sample_batch_actions(const Actor& actor, const Actor::Forward& f, const Mat& noise)
{
    const Eigen::Index n = f.mean.cols();
    BatchSample s;
    s.action.resize(actor.act_dim(), n);
    s.log_prob.resize(n);
    s.draws.reserve(n);
    s.heads.reserve(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        s.heads.push_back(actor.head(f, j));
        s.draws.push_back(policy::reparam_sample(s.heads.back(), noise.col(j)));
        s.action.col(j) = s.draws.back().action;
        s.log_prob[j] = s.draws.back().log_prob;
    }
    return s;
}

Vec sample_backward(const Actor& actor, const Actor::Forward& f, const BatchSample& s, const Mat& d_action,
                    const Vec& d_log_prob)
{
    const Eigen::Index n = f.mean.cols();
    Mat d_mean(actor.act_dim(), n);
    Mat d_log_std(actor.act_dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto g = policy::reparam_backward(s.heads[j], s.draws[j], d_action.col(j), d_log_prob[j]);
        d_mean.col(j) = g.d_mean;
        d_log_std.col(j) = g.d_log_std;
    }
    return actor.backward(f, d_mean, d_log_std);
}

Vec batch_log_prob(const Actor& actor, const Actor::Forward& f, const Mat& actions)
{
    Vec lp(actions.cols());
    for (Eigen::Index j = 0; j < actions.cols(); ++j) lp[j] = policy::log_prob(actor.head(f, j), actions.col(j));
    return lp;
}

Vec batch_log_prob_backward(const Actor& actor, const Actor::Forward& f, const Mat& actions, const Vec& d_log_prob)
{
    const Eigen::Index n = actions.cols();
    Mat d_mean(actor.act_dim(), n);
    Mat d_log_std(actor.act_dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto g = policy::log_prob_grad(actor.head(f, j), actions.col(j));
        d_mean.col(j) = g.d_mean * d_log_prob[j];
        d_log_std.col(j) = g.d_log_std * d_log_prob[j];
    }
    return actor.backward(f, d_mean, d_log_std);
}

Mat critic_input(const Mat& s, const Mat& a)
{
    if (s.cols() != a.cols()) throw ContractViolation("critic_input: batch size mismatch");
    Mat x(s.rows() + a.rows(), s.cols());
    x.topRows(s.rows()) = s;
    x.bottomRows(a.rows()) = a;
    return x;
}

CriticPair::CriticPair(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed)
    : double_q(cfg.double_q)
{
    const nn::NetSpec spec = make_net_spec(cfg, obs_dim + act_dim, 1);
    for (int i = 0; i < 2; ++i) {
        online[i] = nn::init_params(spec, seed + 101 * static_cast<std::uint64_t>(i + 1));
        target[i] = online[i];
    }
}

Vec CriticPair::q(int i, const Mat& s, const Mat& a) const
{
    return nn::forward(online[i], critic_input(s, a)).row(0).transpose();
}

Vec CriticPair::predict(const Mat& s, const Mat& a) const
{
    const Mat x = critic_input(s, a);
    Vec q1 = nn::forward(online[0], x).row(0).transpose();
    if (!double_q) return q1;
    const Vec q2 = nn::forward(online[1], x).row(0).transpose();
    return q1.cwiseMin(q2);
}

Vec CriticPair::predict_target(const Mat& s, const Mat& a) const
{
    const Mat x = critic_input(s, a);
    Vec q1 = nn::forward(target[0], x).row(0).transpose();
    if (!double_q) return q1;
    const Vec q2 = nn::forward(target[1], x).row(0).transpose();
    return q1.cwiseMin(q2);
}

MinQ min_q(const std::array<Vec, 2>& q, int count)
{
    MinQ m;
    m.value = q[0];
    m.argmin.assign(static_cast<std::size_t>(q[0].size()), 0);
    if (count == 2) {
        for (Eigen::Index j = 0; j < q[0].size(); ++j) {
            if (q[1][j] < q[0][j]) {
                m.value[j] = q[1][j];
                m.argmin[static_cast<std::size_t>(j)] = 1;
            }
        }
    }
    return m;
}

} // namespace offbench::algo
