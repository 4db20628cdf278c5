#include <cmath>
#include <limits>

#include "offbench/algorithms.hpp"
#include "offbench/errors.hpp"

namespace offbench::algo {

double expectile_loss(double x, double tau)
{
    const double w = x < 0.0 ? 1.0 - tau : tau;
    return w * x * x;
}

double expectile_grad(double x, double tau)
{
    const double w = x < 0.0 ? 1.0 - tau : tau;
    return 2.0 * w * x;
}

LossGrad bc_loss(const Actor& actor, const Mat& s, const Mat& a, BcVariant variant, const Mat& noise)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    const auto f = actor.forward(s);
    LossGrad out;
    if (variant == BcVariant::mle) {
        const Vec lp = batch_log_prob(actor, f, a);
        out.loss = -lp.mean();
        out.grad = batch_log_prob_backward(actor, f, a, Vec::Constant(a.cols(), -inv_b));
        return out;
    }
    const BatchSample smp = sample_batch_actions(actor, f, noise);
    const Mat diff = smp.action - a;
    out.loss = diff.colwise().squaredNorm().mean();
    out.grad = sample_backward(actor, f, smp, 2.0 * inv_b * diff, Vec::Zero(a.cols()));
    return out;
}

CriticGrad critic_td_loss(const CriticPair& critics, const Mat& s, const Mat& a, const Vec& y)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    const Mat x = critic_input(s, a);
    CriticGrad out;
    for (int i = 0; i < critics.count(); ++i) {
        nn::Tape tape;
        const Mat q = nn::forward(critics.online[i], x, &tape);
        const Eigen::RowVectorXd diff = q.row(0) - y.transpose();
        out.loss += diff.squaredNorm() * inv_b;
        out.grad[i] = nn::backward(tape, 2.0 * inv_b * diff);
    }
    return out;
}

Vec sac_target(const CriticPair& critics, const Actor& actor, const Batch& b, double gamma, double alpha,
               const Mat& next_noise)
{
    const auto f = actor.forward(b.s2);
    const BatchSample smp = sample_batch_actions(actor, f, next_noise);
    const Vec q = critics.predict_target(b.s2, smp.action);
    const Vec soft = q - alpha * smp.log_prob;
    return b.r + gamma * (Vec::Ones(b.r.size()) - b.done).cwiseProduct(soft);
}

namespace {

// Gradient of mean_j min_i Q_i(s_j, a_j) w.r.t. the actions; also returns the minimum.
Mat min_q_action_grad(const CriticPair& critics, const Mat& s, const Mat& a, double scale, Vec* q_min)
{
    const Mat x = critic_input(s, a);
    std::array<nn::Tape, 2> tapes;
    std::array<Vec, 2> q;
    for (int i = 0; i < critics.count(); ++i) q[i] = nn::forward(critics.online[i], x, &tapes[i]).row(0).transpose();
    const MinQ m = min_q(q, critics.count());
    Mat da = Mat::Zero(a.rows(), a.cols());
    for (int i = 0; i < critics.count(); ++i) {
        Mat dy = Mat::Zero(1, a.cols());
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (m.argmin[static_cast<std::size_t>(j)] == i) dy(0, j) = scale;
        Mat dx;
        nn::backward(tapes[i], dy, &dx);
        da += dx.bottomRows(a.rows());
    }
    if (q_min) *q_min = m.value;
    return da;
}

} // namespace

LossGrad sac_actor_loss(const Actor& actor, const CriticPair& critics, const Mat& s, double alpha, const Mat& noise,
                        double* mean_log_prob)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    const auto f = actor.forward(s);
    const BatchSample smp = sample_batch_actions(actor, f, noise);
    Vec q;
    const Mat da = min_q_action_grad(critics, s, smp.action, -inv_b, &q);
    LossGrad out;
    out.loss = (alpha * smp.log_prob - q).mean();
    out.grad = sample_backward(actor, f, smp, da, Vec::Constant(s.cols(), alpha * inv_b));
    if (mean_log_prob) *mean_log_prob = smp.log_prob.mean();
    return out;
}

CqlProposals draw_cql_proposals(Rng& rng, int act_dim, Eigen::Index batch, int n, std::vector<ProposalSource> sources)
{
    if (n < 1) throw ContractViolation("cql proposals: n must be >= 1");
    if (sources.empty()) throw ContractViolation("cql proposals: no proposal source");
    CqlProposals p;
    p.n = n;
    p.sources = std::move(sources);
    for (const auto src : p.sources) {
        if (src == ProposalSource::uniform)
            p.noise.push_back(uniform(rng, act_dim, n * batch, -1.0, 1.0));
        else
            p.noise.push_back(standard_normal(rng, act_dim, n * batch));
    }
    return p;
}

ProposalSet build_proposals(const Actor& actor, const Mat& s, const Mat& s2, const CqlProposals& p)
{
    const Eigen::Index batch = s.cols();
    const int d = actor.act_dim();
    const auto n_src = static_cast<Eigen::Index>(p.sources.size());
    const Eigen::Index per_state = n_src * p.n;
    ProposalSet out;
    out.per_state = static_cast<int>(per_state);
    out.states.resize(s.rows(), batch * per_state);
    out.actions.resize(d, batch * per_state);
    out.log_q.resize(batch * per_state);

    Actor::Forward fs;
    Actor::Forward fs2;
    for (const auto src : p.sources) {
        if (src == ProposalSource::policy_s && fs.mean.size() == 0) fs = actor.forward(s);
        if (src == ProposalSource::policy_s2 && fs2.mean.size() == 0) fs2 = actor.forward(s2);
    }
    const double log_uniform = -static_cast<double>(d) * std::log(2.0);

    for (Eigen::Index j = 0; j < batch; ++j) {
        for (Eigen::Index si = 0; si < n_src; ++si) {
            const ProposalSource src = p.sources[static_cast<std::size_t>(si)];
            const Mat& noise = p.noise[static_cast<std::size_t>(si)];
            policy::PolicyHeadOutput head;
            if (src == ProposalSource::policy_s) head = actor.head(fs, j);
            if (src == ProposalSource::policy_s2) head = actor.head(fs2, j);
            for (int k = 0; k < p.n; ++k) {
                const Eigen::Index col = j * per_state + si * p.n + k;
                const Eigen::Index ncol = j * p.n + k;
                out.states.col(col) = s.col(j);
                if (src == ProposalSource::uniform) {
                    out.actions.col(col) = noise.col(ncol);
                    out.log_q[col] = log_uniform;
                } else {
                    const auto draw = policy::reparam_sample(head, noise.col(ncol));
                    out.actions.col(col) = draw.action;
                    out.log_q[col] = draw.log_prob;
                }
                if (!std::isfinite(out.log_q[col])) throw ContractViolation("cql_logsumexp: non-finite proposal density");
            }
        }
    }
    return out;
}

namespace {

// Per-state log-mean-exp of (q - log_q) and its softmax weights.
Vec grouped_logsumexp(const Vec& q, const Vec& log_q, int per_state, Vec* softmax)
{
    const Eigen::Index batch = q.size() / per_state;
    Vec out(batch);
    if (softmax) softmax->resize(q.size());
    const double log_count = std::log(static_cast<double>(per_state));
    for (Eigen::Index j = 0; j < batch; ++j) {
        const Vec z = q.segment(j * per_state, per_state) - log_q.segment(j * per_state, per_state);
        const double zmax = z.maxCoeff();
        const Vec e = (z.array() - zmax).exp();
        const double sum = e.sum();
        out[j] = zmax + std::log(sum) - log_count;
        if (softmax) softmax->segment(j * per_state, per_state) = e / sum;
    }
    return out;
}

} // namespace

Vec cql_logsumexp(const QFunction& q, const Actor& actor, const Mat& s, const Mat& s2, const CqlProposals& p)
{
    const ProposalSet ps = build_proposals(actor, s, s2, p);
    return grouped_logsumexp(q(ps.states, ps.actions), ps.log_q, ps.per_state, nullptr);
}

Vec cql_logsumexp(const QFunction& q, const Actor& actor, const Mat& s, const Mat& s2, int n, Rng& rng)
{
    return cql_logsumexp(q, actor, s, s2, draw_cql_proposals(rng, actor.act_dim(), s.cols(), n));
}

CriticGrad cql_critic_loss(const CriticPair& critics, const Actor& actor, const Batch& b, const Vec& y,
                           double cql_alpha, const CqlProposals& p, double* penalty)
{
    const double inv_b = 1.0 / static_cast<double>(b.size());
    const Mat x = critic_input(b.s, b.a);
    const ProposalSet ps = build_proposals(actor, b.s, b.s2, p);
    const Mat xp = critic_input(ps.states, ps.actions);
    CriticGrad out;
    double pen_total = 0.0;
    for (int i = 0; i < critics.count(); ++i) {
        nn::Tape tape;
        const Mat q = nn::forward(critics.online[i], x, &tape);
        const Eigen::RowVectorXd diff = q.row(0) - y.transpose();
        nn::Tape ptape;
        const Mat qp = nn::forward(critics.online[i], xp, &ptape);
        Vec soft;
        const Vec lse = grouped_logsumexp(qp.row(0).transpose(), ps.log_q, ps.per_state, &soft);
        const double pen = (lse - q.row(0).transpose()).mean();
        pen_total += pen;
        out.loss += diff.squaredNorm() * inv_b + cql_alpha * pen;

        // The data-action term of the penalty shares the TD tape.
        const Eigen::RowVectorXd dy = 2.0 * inv_b * diff + Eigen::RowVectorXd::Constant(diff.size(), -cql_alpha * inv_b);
        out.grad[i] = nn::backward(tape, dy);
        nn::backward_accumulate(ptape, (cql_alpha * inv_b) * soft.transpose(), out.grad[i]);
    }
    if (penalty) *penalty = pen_total;
    return out;
}

Vec crr_advantage(const QFunction& q_hat, const Actor& actor, const Mat& s, const Mat& a, int m, Rng& rng)
{
    if (m < 1) throw ContractViolation("crr_advantage: m must be >= 1");
    const auto f = actor.forward(s);
    Vec baseline = Vec::Zero(s.cols());
    for (int i = 0; i < m; ++i) {
        const BatchSample smp = sample_batch_actions(actor, f, standard_normal(rng, actor.act_dim(), s.cols()));
        baseline += q_hat(s, smp.action);
    }
    return q_hat(s, a) - baseline / static_cast<double>(m);
}

Vec awr_weights(const Vec& adv, double temperature, double clip, bool adv_norm)
{
    if (!(temperature > 0.0)) throw ContractViolation("awr_weights: temperature must be positive");
    const Vec z = adv / temperature;
    Vec w(z.size());
    if (adv_norm) {
        // exp(z) / mean(exp(z)) computed relative to the maximum to avoid overflow.
        const Vec e = (z.array() - z.maxCoeff()).exp();
        w = e / e.mean();
    } else {
        const double cap = std::log(clip);
        w = (z.array() >= cap).select(clip, z.array().min(cap).exp());
    }
    return w.cwiseMin(clip);
}

LossGrad weighted_log_prob_loss(const Actor& actor, const Mat& s, const Mat& a, const Vec& w)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    const auto f = actor.forward(s);
    const Vec lp = batch_log_prob(actor, f, a);
    LossGrad out;
    out.loss = -(w.cwiseProduct(lp)).mean();
    out.grad = batch_log_prob_backward(actor, f, a, -inv_b * w);
    return out;
}

double td3bc_lambda(const Vec& q, double alpha)
{
    return alpha / q.cwiseAbs().mean();
}

LossGrad td3bc_actor_loss(const Actor& actor, const nn::ParamSet& q1, const Mat& s, const Mat& a, double lambda)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    const auto f = actor.forward(s);
    const Mat pi = f.mean.array().tanh();
    nn::Tape tape;
    const Mat q = nn::forward(q1, critic_input(s, pi), &tape);
    Mat dx;
    nn::backward(tape, Mat::Constant(1, s.cols(), -lambda * inv_b), &dx);
    const Mat diff = pi - a;
    LossGrad out;
    out.loss = -lambda * q.mean() + diff.colwise().squaredNorm().mean();
    const Mat d_pi = dx.bottomRows(a.rows()) + 2.0 * inv_b * diff;
    const Mat d_mean = d_pi.cwiseProduct((1.0 - pi.array().square()).matrix());
    out.grad = actor.backward(f, d_mean, Mat::Zero(a.rows(), s.cols()));
    return out;
}

Vec td3bc_target(const CriticPair& critics, const Actor& target_actor, const Batch& b, double gamma, double noise_std,
                 double noise_clip, const Mat& noise)
{
    const Mat mu = nn::forward(target_actor.params, b.s2).topRows(target_actor.act_dim());
    const Mat eps = (noise_std * noise).cwiseMax(-noise_clip).cwiseMin(noise_clip);
    const Mat a2 = (Mat(mu.array().tanh()) + eps).cwiseMax(-1.0).cwiseMin(1.0);
    const Vec q = critics.predict_target(b.s2, a2);
    return b.r + gamma * (Vec::Ones(b.r.size()) - b.done).cwiseProduct(q);
}

Vec value_predict(const nn::ParamSet& value, const Mat& s)
{
    return nn::forward(value, s).row(0).transpose();
}

LossGrad iql_value_loss(const nn::ParamSet& value, const Mat& s, const Vec& q_target, double tau)
{
    const double inv_b = 1.0 / static_cast<double>(s.cols());
    nn::Tape tape;
    const Mat v = nn::forward(value, s, &tape);
    Mat dy(1, s.cols());
    LossGrad out;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const double u = q_target[j] - v(0, j);
        out.loss += expectile_loss(u, tau) * inv_b;
        dy(0, j) = -expectile_grad(u, tau) * inv_b;
    }
    out.grad = nn::backward(tape, dy);
    return out;
}

} // namespace offbench::algo
