#include <algorithm>
#include <cmath>

#include "offbench/errors.hpp"
#include "offbench/muzero.hpp"

namespace offbench::mz {

Mat SearchModel::sample_actions(const Prediction& p, Eigen::Index column, int n, Rng& rng) const
{
    const Mat z = standard_normal(rng, p.mean.rows(), n);
    Mat u = (z.array().colwise() * p.log_std.col(column).array().exp()).matrix();
    u.colwise() += p.mean.col(column);
    return u.array().tanh();
}

double ucb_score(double q_normalized, double beta_hat, int parent_visits, int child_visits, double c1, double c2)
{
    const double n = static_cast<double>(parent_visits);
    const double explore = beta_hat * std::sqrt(n) / (1.0 + child_visits);
    return q_normalized + explore * (c1 + std::log((n + c2 + 1.0) / c2));
}

int select_child(const std::vector<double>& scores)
{
    if (scores.empty()) throw ContractViolation("select_child: no children");
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
    return best;
}

void MinMaxStats::update(double q)
{
    min_ = std::min(min_, q);
    max_ = std::max(max_, q);
}

double MinMaxStats::normalize(double q) const
{
    if (degenerate()) return 0.0;
    return std::clamp((q - min_) / (max_ - min_), 0.0, 1.0);
}

Vec SearchResult::best_action() const
{
    const auto it = std::max_element(visits.begin(), visits.end());
    return actions.col(it - visits.begin());
}

namespace {

struct Node {
    int parent = -1;
    Vec latent;
    double reward = 0.0;
    int visits = 0;
    double value_sum = 0.0;
    Mat actions;
    Vec prior;
    std::vector<int> children;

    double value() const { return visits > 0 ? value_sum / visits : 0.0; }
};

struct Tree {
    std::vector<Node> nodes;
    MinMaxStats stats;
};

// Merges exact duplicates; prior mass is multiplicity / n.
void set_candidates(Node& node, const Mat& draws, bool root_noise)
{
    const Eigen::Index n = draws.cols();
    std::vector<Eigen::Index> keep;
    std::vector<double> count;
    for (Eigen::Index j = 0; j < n; ++j) {
        bool dup = false;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (draws.col(keep[k]) == draws.col(j)) {
                count[k] += 1.0;
                dup = true;
                break;
            }
        }
        if (!dup) {
            keep.push_back(j);
            count.push_back(1.0);
        }
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    node.actions.resize(draws.rows(), m);
    node.prior.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        node.actions.col(k) = draws.col(keep[static_cast<std::size_t>(k)]);
        node.prior[k] = count[static_cast<std::size_t>(k)] / static_cast<double>(n);
    }
    if (root_noise) node.prior = 0.75 * node.prior + Vec::Constant(m, 0.25 / static_cast<double>(m));
    node.children.assign(static_cast<std::size_t>(m), -1);
}

int pick(const Tree& tree, const Node& node, const SearchConfig& cfg)
{
    int total = 0;
    for (int c : node.children)
        if (c >= 0) total += tree.nodes[static_cast<std::size_t>(c)].visits;
    std::vector<double> scores(node.children.size());
    for (std::size_t i = 0; i < node.children.size(); ++i) {
        const int c = node.children[i];
        int visits = 0;
        double q = 0.0;
        if (c >= 0 && tree.nodes[static_cast<std::size_t>(c)].visits > 0) {
            const Node& child = tree.nodes[static_cast<std::size_t>(c)];
            visits = child.visits;
            q = tree.stats.normalize(child.reward + cfg.discount * child.value());
        }
        scores[i] = ucb_score(q, node.prior[static_cast<Eigen::Index>(i)], total, visits, cfg.c1, cfg.c2);
    }
    return select_child(scores);
}

void backup(Tree& tree, int leaf, double value, double discount)
{
    double g = value;
    for (int id = leaf; id >= 0;) {
        Node& node = tree.nodes[static_cast<std::size_t>(id)];
        node.value_sum += g;
        node.visits += 1;
        if (node.parent >= 0) tree.stats.update(node.reward + discount * node.value());
        g = node.reward + discount * g;
        id = node.parent;
    }
}

} // namespace

std::vector<SearchResult> sampled_mcts(const SearchModel& model, const Mat& obs, const SearchConfig& cfg, Rng& rng)
{
    if (cfg.simulations < 1) throw ConfigError("mz_simulations", "must be >= 1");
    if (cfg.num_samples < 1) throw ConfigError("mz_num_samples", "must be >= 1");
    const Eigen::Index batch = obs.cols();
    const int d = model.act_dim();
    std::vector<Tree> trees(static_cast<std::size_t>(batch));

    const Mat root_latent = model.initial(obs);
    const Prediction root_pred = model.predict(root_latent);
    for (Eigen::Index b = 0; b < batch; ++b) {
        Node root;
        root.latent = root_latent.col(b);
        set_candidates(root, model.sample_actions(root_pred, b, cfg.num_samples, rng), cfg.root_noise);
        trees[static_cast<std::size_t>(b)].nodes.push_back(std::move(root));
    }

    std::vector<int> leaf_parent(static_cast<std::size_t>(batch));
    std::vector<int> leaf_slot(static_cast<std::size_t>(batch));
    Mat parent_latent(root_latent.rows(), batch);
    Mat actions(d, batch);
    for (int sim = 0; sim < cfg.simulations; ++sim) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            const Tree& tree = trees[static_cast<std::size_t>(b)];
            int id = 0;
            for (;;) {
                const Node& node = tree.nodes[static_cast<std::size_t>(id)];
                const int slot = pick(tree, node, cfg);
                const int child = node.children[static_cast<std::size_t>(slot)];
                if (child < 0) {
                    leaf_parent[static_cast<std::size_t>(b)] = id;
                    leaf_slot[static_cast<std::size_t>(b)] = slot;
                    parent_latent.col(b) = node.latent;
                    actions.col(b) = node.actions.col(slot);
                    break;
                }
                id = child;
            }
        }
        const Mat child_latent = model.next(parent_latent, actions);
        const Prediction pred = model.predict(child_latent);
        for (Eigen::Index b = 0; b < batch; ++b) {
            Tree& tree = trees[static_cast<std::size_t>(b)];
            Node child;
            child.parent = leaf_parent[static_cast<std::size_t>(b)];
            child.latent = child_latent.col(b);
            child.reward = pred.reward[b];
            set_candidates(child, model.sample_actions(pred, b, cfg.num_samples, rng), false);
            const int id = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(std::move(child));
            tree.nodes[static_cast<std::size_t>(leaf_parent[static_cast<std::size_t>(b)])]
                .children[static_cast<std::size_t>(leaf_slot[static_cast<std::size_t>(b)])] = id;
            backup(tree, id, pred.value[b], cfg.discount);
        }
    }

    std::vector<SearchResult> out(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
        const Tree& tree = trees[static_cast<std::size_t>(b)];
        const Node& root = tree.nodes[0];
        SearchResult& r = out[static_cast<std::size_t>(b)];
        r.actions = root.actions;
        r.prior = root.prior;
        r.visits.assign(root.children.size(), 0);
        for (std::size_t i = 0; i < root.children.size(); ++i)
            if (root.children[i] >= 0) r.visits[i] = tree.nodes[static_cast<std::size_t>(root.children[i])].visits;
        r.policy.resize(static_cast<Eigen::Index>(r.visits.size()));
        for (std::size_t i = 0; i < r.visits.size(); ++i)
            r.policy[static_cast<Eigen::Index>(i)] = static_cast<double>(r.visits[i]) / cfg.simulations;
        r.root_value = root.value();
    }
    return out;
}

SearchResult sampled_mcts(const SearchModel& model, const Vec& obs, const SearchConfig& cfg, Rng& rng)
{
    return sampled_mcts(model, Mat(obs), cfg, rng).front();
}

} // namespace offbench::mz
