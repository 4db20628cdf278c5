#include "offbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "offbench/errors.hpp"

namespace offbench::data {

double Trajectory::total_return() const
{
    return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

namespace {

void validate_trajectory(const Trajectory& t, const DatasetMeta& meta, std::size_t index)
{
    const std::string where = "trajectory " + std::to_string(index) + ": ";
    if (t.rewards.empty()) throw SchemaError(where + "has no steps");
    if (t.actions.size() != t.rewards.size()) throw SchemaError(where + "actions/rewards length mismatch");
    if (t.states.size() != t.rewards.size() + 1) throw SchemaError(where + "states must have length T+1");
    for (const auto& s : t.states)
        if (s.size() != meta.obs_dim) throw SchemaError(where + "state dimension differs from obs_dim");
    for (const auto& a : t.actions)
        if (a.size() != meta.act_dim) throw SchemaError(where + "action dimension differs from act_dim");
    if (!std::isfinite(t.total_return())) throw SchemaError(where + "non-finite return");
}

DatasetStats compute_stats(const std::vector<Trajectory>& trajectories)
{
    DatasetStats s;
    s.n_traj = trajectories.size();
    s.max_return = -std::numeric_limits<double>::infinity();
    s.min_return = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& t : trajectories) {
        const double r = t.total_return();
        s.max_return = std::max(s.max_return, r);
        s.min_return = std::min(s.min_return, r);
        s.n_transitions += t.length();
        sum += r;
    }
    s.mean_return = sum / static_cast<double>(s.n_traj);
    return s;
}

} // namespace

OfflineDataset::OfflineDataset(DatasetMeta meta, std::vector<Trajectory> trajectories)
    : meta_(std::move(meta)), trajectories_(std::move(trajectories))
{
    if (meta_.obs_dim < 1 || meta_.act_dim < 1) throw SchemaError("meta: obs_dim and act_dim must be >= 1");
    if (trajectories_.empty()) throw SchemaError("dataset has no trajectories");
    for (std::size_t i = 0; i < trajectories_.size(); ++i) validate_trajectory(trajectories_[i], meta_, i);
    stats_ = compute_stats(trajectories_);
    offsets_.reserve(trajectories_.size() + 1);
    offsets_.push_back(0);
    for (const auto& t : trajectories_) offsets_.push_back(offsets_.back() + t.length());
}

std::pair<std::size_t, std::size_t> OfflineDataset::locate(std::size_t index) const
{
    if (index >= num_transitions()) throw ContractViolation("transition index out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    const auto traj = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return {traj, index - offsets_[traj]};
}

DatasetStats dataset_stats(const OfflineDataset& ds)
{
    return compute_stats(ds.trajectories());
}

namespace {

nlohmann::json vec_json(const Vec& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<Vec> vecs_from_json(const nlohmann::json& j)
{
    std::vector<Vec> out;
    out.reserve(j.size());
    for (const auto& row : j) {
        const auto values = row.get<std::vector<double>>();
        out.push_back(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    return out;
}

} // namespace

void write_dataset(std::ostream& os, const OfflineDataset& ds)
{
    nlohmann::json meta = ds.meta().extra;
    meta["env_id"] = ds.meta().env_id;
    meta["obs_dim"] = ds.meta().obs_dim;
    meta["act_dim"] = ds.meta().act_dim;
    os << meta.dump() << '\n';
    for (const auto& t : ds.trajectories()) {
        nlohmann::json states = nlohmann::json::array();
        for (const auto& s : t.states) states.push_back(vec_json(s));
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& a : t.actions) actions.push_back(vec_json(a));
        nlohmann::json line = {{"states", std::move(states)},
                               {"actions", std::move(actions)},
                               {"rewards", t.rewards},
                               {"terminal", t.terminal}};
        os << line.dump() << '\n';
    }
}

OfflineDataset read_dataset(std::istream& is)
{
    std::string line;
    std::size_t lineno = 0;
    DatasetMeta meta;
    bool have_meta = false;
    std::vector<Trajectory> trajectories;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
        }
        try {
            if (!have_meta) {
                meta.env_id = j.at("env_id").get<std::string>();
                meta.obs_dim = j.at("obs_dim").get<int>();
                meta.act_dim = j.at("act_dim").get<int>();
                j.erase("env_id");
                j.erase("obs_dim");
                j.erase("act_dim");
                meta.extra = std::move(j);
                have_meta = true;
                continue;
            }
            Trajectory t;
            t.states = vecs_from_json(j.at("states"));
            t.actions = vecs_from_json(j.at("actions"));
            t.rewards = j.at("rewards").get<std::vector<double>>();
            t.terminal = j.at("terminal").get<bool>();
            trajectories.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, std::string("unexpected structure: ") + e.what());
        }
    }
    if (!have_meta) throw ParseError(lineno, "missing meta line");
    return OfflineDataset(std::move(meta), std::move(trajectories));
}

void save_dataset(const std::filesystem::path& path, const OfflineDataset& ds)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write dataset " + path.string());
    write_dataset(os, ds);
}

OfflineDataset load_dataset(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read dataset " + path.string());
    return read_dataset(is);
}

double reward_scale(const OfflineDataset& ds)
{
    const auto& s = ds.stats();
    if (!(s.max_return > s.min_return))
        throw DegenerateDatasetError("reward normalization needs maxR > minR (all trajectory returns equal)");
    return 1000.0 / (s.max_return - s.min_return);
}

OfflineDataset normalize_rewards(const OfflineDataset& ds)
{
    const double scale = reward_scale(ds);
    std::vector<Trajectory> out = ds.trajectories();
    for (auto& t : out)
        for (auto& r : t.rewards) r *= scale;
    DatasetMeta meta = ds.meta();
    meta.extra["reward_scale"] = scale;
    return OfflineDataset(std::move(meta), std::move(out));
}

OfflineDataset top_fraction(const OfflineDataset& ds, double x)
{
    if (!(x > 0.0 && x <= 1.0)) throw ConfigError("top_fraction", "must lie in (0, 1]");
    const auto& trajs = ds.trajectories();
    const std::size_t n = trajs.size();
    const auto keep = static_cast<std::size_t>(std::ceil(x * static_cast<double>(n) - 1e-9));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> returns(n);
    for (std::size_t i = 0; i < n; ++i) returns[i] = trajs[i].total_return();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return returns[a] > returns[b]; });
    order.resize(std::max<std::size_t>(keep, 1));
    std::sort(order.begin(), order.end());
    std::vector<Trajectory> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(trajs[i]);
    return OfflineDataset(ds.meta(), std::move(out));
}

Batch sample_batch(const OfflineDataset& ds, int n, Rng& rng, BatchView view)
{
    if (n < 1) throw ContractViolation("sample_batch: n must be >= 1");
    const auto& trajs = ds.trajectories();
    const int od = ds.meta().obs_dim;
    const int ad = ds.meta().act_dim;

    // Row counts per trajectory under the requested view. A terminal last step needs no a'
    // and stays in the sarsa view; a truncated one is dropped.
    std::vector<std::size_t> offsets{0};
    offsets.reserve(trajs.size() + 1);
    for (const auto& t : trajs)
        offsets.push_back(offsets.back() + (view == BatchView::sarsa && !t.terminal ? t.length() - 1 : t.length()));
    const std::size_t total = offsets.back();
    if (total == 0) throw ContractViolation("sample_batch: no rows available for this view");

    Batch b;
    b.s.resize(od, n);
    b.a.resize(ad, n);
    b.r.resize(n);
    b.s2.resize(od, n);
    b.done.resize(n);
    b.a2 = Mat::Zero(ad, n);
    b.a2_valid.resize(n);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    for (int j = 0; j < n; ++j) {
        const std::size_t idx = pick(rng);
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), idx);
        const auto ti = static_cast<std::size_t>(it - offsets.begin()) - 1;
        const std::size_t t = idx - offsets[ti];
        const Trajectory& tr = trajs[ti];
        b.s.col(j) = tr.states[t];
        b.a.col(j) = tr.actions[t];
        b.r[j] = tr.rewards[t];
        b.s2.col(j) = tr.states[t + 1];
        const bool last = t + 1 == tr.length();
        b.done[j] = (last && tr.terminal) ? 1.0 : 0.0;
        b.a2_valid[j] = last ? 0.0 : 1.0;
        if (!last) b.a2.col(j) = tr.actions[t + 1];
    }
    return b;
}

std::size_t Histogram::total() const
{
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram make_histogram(const std::vector<double>& values, int bins)
{
    if (bins < 1) throw ContractViolation("histogram: bins must be >= 1");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    if (values.empty()) return h;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.hi = *hi;
    const double width = (h.hi - h.lo) / bins;
    for (double v : values) {
        std::size_t b = 0;
        if (width > 0.0) b = std::min(static_cast<std::size_t>((v - h.lo) / width), static_cast<std::size_t>(bins - 1));
        ++h.counts[b];
    }
    return h;
}

std::vector<double> trajectory_returns(const OfflineDataset& ds)
{
    std::vector<double> out;
    out.reserve(ds.trajectories().size());
    for (const auto& t : ds.trajectories()) out.push_back(t.total_return());
    return out;
}

Histogram reward_histogram(const OfflineDataset& ds, int bins)
{
    std::vector<double> rewards;
    rewards.reserve(ds.num_transitions());
    for (const auto& t : ds.trajectories()) rewards.insert(rewards.end(), t.rewards.begin(), t.rewards.end());
    return make_histogram(rewards, bins);
}

Histogram return_histogram(const OfflineDataset& ds, int bins)
{
    return make_histogram(trajectory_returns(ds), bins);
}

} // namespace offbench::data
