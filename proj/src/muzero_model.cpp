#include <cmath>

#include "offbench/errors.hpp"
#include "offbench/muzero.hpp"
#include "offbench/policy.hpp"

namespace offbench::mz {

namespace {

nn::NetSpec spec_for(const ChoiceConfig& cfg, int in, std::vector<int> hidden, int out)
{
    nn::NetSpec s;
    s.input_dim = in;
    s.hidden_dims = std::move(hidden);
    s.output_dim = out;
    s.activation = cfg.activation;
    s.layer_norm = cfg.layer_norm;
    s.init = cfg.init_scheme;
    return s;
}

} // namespace

WorldModel::WorldModel(int obs_dim, int act_dim, const ChoiceConfig& cfg, std::uint64_t seed)
    : obs(obs_dim), act(act_dim), latent(cfg.mz_latent_dim)
{
    const int width = cfg.hidden_dims.front();
    h = nn::init_params(spec_for(cfg, obs_dim, cfg.hidden_dims, latent), seed * 1000003ULL + 1);
    g = nn::init_params(spec_for(cfg, latent + act_dim, {width}, latent), seed * 1000003ULL + 2);
    f = nn::init_params(spec_for(cfg, latent, {width}, 2 * act_dim + 2), seed * 1000003ULL + 3);
}

Mat WorldModel::initial(const Mat& o) const
{
    return nn::forward(h, o);
}

Mat WorldModel::next(const Mat& z, const Mat& a) const
{
    Mat x(z.rows() + a.rows(), z.cols());
    x.topRows(z.rows()) = z;
    x.bottomRows(a.rows()) = a;
    return nn::forward(g, x);
}

Prediction WorldModel::predict(const Mat& z) const
{
    return split_prediction(nn::forward(f, z), act);
}

Prediction split_prediction(const Mat& out, int d)
{
    Prediction p;
    p.mean = out.topRows(d);
    p.log_std = out.middleRows(d, d).cwiseMax(policy::kLogStdMin).cwiseMin(policy::kLogStdMax);
    p.reward = out.row(2 * d).transpose();
    p.value = out.row(2 * d + 1).transpose();
    return p;
}

SearchConfig search_config(const ChoiceConfig& cfg)
{
    SearchConfig s;
    s.num_samples = cfg.mz_num_samples;
    s.simulations = cfg.mz_simulations;
    s.c1 = cfg.mz_c1;
    s.c2 = cfg.mz_c2;
    s.discount = cfg.discount;
    s.root_noise = cfg.mz_root_noise;
    return s;
}

double nstep_target(const data::Trajectory& traj, std::size_t t, int n, double gamma,
                    const std::function<double(const Vec&)>& value)
{
    const std::size_t T = traj.length();
    if (t > T) throw ContractViolation("nstep_target: t beyond the final state");
    if (n < 1) throw ContractViolation("nstep_target: n must be >= 1");
    const std::size_t end = std::min(t + static_cast<std::size_t>(n), T);
    double z = 0.0;
    double disc = 1.0;
    for (std::size_t i = t; i < end; ++i) {
        z += disc * traj.rewards[i];
        disc *= gamma;
    }
    if (!(traj.terminal && end == T)) z += disc * value(traj.states[end]);
    return z;
}

UnrollLoss unroll_loss(const WorldModel& model, const UnrollBatch& batch, double latent_grad_scale)
{
    const int K = batch.unroll_steps();
    const Eigen::Index B = batch.obs.cols();
    const int d = model.act;
    const int N = batch.num_samples;
    const auto rows = static_cast<Eigen::Index>(K + 1);
    if (batch.value_target.rows() != rows || batch.value_mask.rows() != rows || batch.reward_target.rows() != rows ||
        batch.reward_mask.rows() != rows || batch.policy_mask.rows() != rows ||
        batch.policy_actions.size() != static_cast<std::size_t>(K + 1) ||
        batch.policy_probs.size() != static_cast<std::size_t>(K + 1))
        throw ContractViolation("unroll_loss: targets must cover K+1 positions (pad short segments)");
    for (const auto& a : batch.actions)
        if (a.rows() != d || a.cols() != B) throw ContractViolation("unroll_loss: action block shape mismatch");

    UnrollLoss out;
    out.grad.h = Vec::Zero(model.h.size());
    out.grad.g = Vec::Zero(model.g.size());
    out.grad.f = Vec::Zero(model.f.size());
    const double inv_b = 1.0 / static_cast<double>(B);

    nn::Tape tape_h;
    std::vector<nn::Tape> tape_f(static_cast<std::size_t>(K + 1));
    std::vector<nn::Tape> tape_g(static_cast<std::size_t>(K));
    std::vector<Mat> d_out(static_cast<std::size_t>(K + 1));

    Mat z = nn::forward(model.h, batch.obs, &tape_h);
    for (int k = 0; k <= K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Mat raw = nn::forward(model.f, z, &tape_f[ku]);
        Mat dy = Mat::Zero(raw.rows(), B);

        for (Eigen::Index b = 0; b < B; ++b) {
            const double v = raw(2 * d + 1, b);
            const double vm = batch.value_mask(k, b);
            const double ev = v - batch.value_target(k, b);
            out.value += vm * ev * ev * inv_b;
            dy(2 * d + 1, b) = 2.0 * vm * ev * inv_b;
            if (k >= 1) {
                const double rm = batch.reward_mask(k, b);
                const double er = raw(2 * d, b) - batch.reward_target(k, b);
                out.reward += rm * er * er * inv_b;
                dy(2 * d, b) = 2.0 * rm * er * inv_b;
            }
            const double pm = batch.policy_mask(k, b);
            if (pm == 0.0) continue;
            const Vec raw_ls = raw.block(d, b, d, 1);
            const auto head = policy::PolicyHeadOutput::from_raw(raw.block(0, b, d, 1), raw_ls,
                                                                 policy::Squash::tanh_squash);
            for (int i = 0; i < N; ++i) {
                const double p = batch.policy_probs[ku](i, b);
                if (p == 0.0) continue;
                const Vec a = batch.policy_actions[ku].col(b * N + i);
                out.policy -= pm * p * policy::log_prob(head, a) * inv_b;
                const auto gr = policy::log_prob_grad(head, a);
                const double scale = -pm * p * inv_b;
                dy.block(0, b, d, 1) += scale * gr.d_mean;
                for (int j = 0; j < d; ++j)
                    if (raw_ls[j] > policy::kLogStdMin && raw_ls[j] < policy::kLogStdMax)
                        dy(d + j, b) += scale * gr.d_log_std[j];
            }
        }
        d_out[ku] = std::move(dy);

        if (k < K) {
            Mat x(z.rows() + d, B);
            x.topRows(z.rows()) = z;
            x.bottomRows(d) = batch.actions[ku];
            z = nn::forward(model.g, x, &tape_g[ku]);
        }
    }
    out.total = out.policy + out.value + out.reward;

    Mat carry; // gradient w.r.t. latent k arriving from transition k
    for (int k = K; k >= 0; --k) {
        const auto ku = static_cast<std::size_t>(k);
        Mat dz;
        nn::backward_accumulate(tape_f[ku], d_out[ku], out.grad.f, &dz);
        if (k < K) dz += carry;
        if (k > 0) {
            Mat dx;
            nn::backward_accumulate(tape_g[ku - 1], dz, out.grad.g, &dx);
            carry = latent_grad_scale * dx.topRows(model.latent);
        } else {
            nn::backward_accumulate(tape_h, dz, out.grad.h);
        }
    }
    return out;
}

UnrollBatch make_unroll_batch(const data::OfflineDataset& ds, const WorldModel& target, const ChoiceConfig& cfg,
                              int batch_size, Rng& position_rng, Rng& search_rng)
{
    const int K = cfg.mz_unroll_steps;
    const int N = cfg.mz_num_samples;
    const int d = target.act;
    const auto B = static_cast<Eigen::Index>(batch_size);
    UnrollBatch ub;
    ub.num_samples = N;
    ub.obs.resize(ds.meta().obs_dim, B);
    ub.actions.assign(static_cast<std::size_t>(K), Mat::Zero(d, B));
    ub.value_target = Mat::Zero(K + 1, B);
    ub.value_mask = Mat::Zero(K + 1, B);
    ub.reward_target = Mat::Zero(K + 1, B);
    ub.reward_mask = Mat::Zero(K + 1, B);
    ub.policy_mask = Mat::Zero(K + 1, B);
    ub.policy_actions.assign(static_cast<std::size_t>(K + 1), Mat::Zero(d, B * N));
    ub.policy_probs.assign(static_cast<std::size_t>(K + 1), Mat::Zero(N, B));

    auto value_fn = [&target](const Vec& s) { return target.predict(target.initial(s)).value[0]; };

    std::uniform_int_distribution<std::size_t> pick(0, ds.num_transitions() - 1);
    std::vector<Vec> search_obs;
    std::vector<std::pair<int, Eigen::Index>> search_slot; // (k, b)
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto [ti, t] = ds.locate(pick(position_rng));
        const data::Trajectory& tr = ds.trajectories()[ti];
        const std::size_t T = tr.length();
        ub.obs.col(b) = tr.states[t];
        for (int k = 0; k <= K; ++k) {
            const std::size_t pos = t + static_cast<std::size_t>(k);
            if (k < K && pos < T) ub.actions[static_cast<std::size_t>(k)].col(b) = tr.actions[pos];
            if (pos <= T) {
                ub.value_target(k, b) = nstep_target(tr, pos, cfg.mz_td_steps, cfg.discount, value_fn);
                ub.value_mask(k, b) = 1.0;
            } else if (tr.terminal) {
                ub.value_mask(k, b) = 1.0; // absorbing state after termination has value 0
            }
            if (k >= 1) {
                if (pos - 1 < T) {
                    ub.reward_target(k, b) = tr.rewards[pos - 1];
                    ub.reward_mask(k, b) = 1.0;
                } else if (tr.terminal) {
                    ub.reward_mask(k, b) = 1.0;
                }
            }
            if (pos < T) {
                search_obs.push_back(tr.states[pos]);
                search_slot.emplace_back(k, b);
            }
        }
    }

    Mat obs(ds.meta().obs_dim, static_cast<Eigen::Index>(search_obs.size()));
    for (std::size_t i = 0; i < search_obs.size(); ++i) obs.col(static_cast<Eigen::Index>(i)) = search_obs[i];
    const auto results = sampled_mcts(target, obs, search_config(cfg), search_rng);
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto [k, b] = search_slot[i];
        const auto ku = static_cast<std::size_t>(k);
        const SearchResult& r = results[i];
        for (Eigen::Index j = 0; j < r.actions.cols(); ++j) {
            ub.policy_actions[ku].col(b * N + j) = r.actions.col(j);
            ub.policy_probs[ku](j, b) = r.policy[j];
        }
        ub.policy_mask(k, b) = 1.0;
    }
    return ub;
}

} // namespace offbench::mz
