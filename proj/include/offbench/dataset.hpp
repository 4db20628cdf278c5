#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "offbench/rng.hpp"

namespace offbench::data {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One episode. states has length T+1 (includes the final successor).
struct Trajectory {
    std::vector<Vec> states;
    std::vector<Vec> actions;
    std::vector<double> rewards;
    bool terminal = false; // ended by the environment rather than by the horizon

    std::size_t length() const { return rewards.size(); }
    double total_return() const;
};

struct DatasetMeta {
    std::string env_id;
    int obs_dim = 0;
    int act_dim = 0;
    nlohmann::json extra = nlohmann::json::object(); // generator provenance, kind, ...
};

struct DatasetStats {
    double max_return = 0.0;
    double min_return = 0.0;
    std::size_t n_traj = 0;
    std::size_t n_transitions = 0;
    double mean_return = 0.0;

    bool operator==(const DatasetStats&) const = default;
};

/// Immutable collection of trajectories; statistics are computed once at construction.
class OfflineDataset {
public:
    /// Throws SchemaError on an empty list, length inconsistencies or dimension mismatches.
    OfflineDataset(DatasetMeta meta, std::vector<Trajectory> trajectories);

    const DatasetMeta& meta() const { return meta_; }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }
    const DatasetStats& stats() const { return stats_; }
    std::size_t num_transitions() const { return stats_.n_transitions; }

    /// Global transition index -> (trajectory, step).
    std::pair<std::size_t, std::size_t> locate(std::size_t index) const;

private:
    DatasetMeta meta_;
    std::vector<Trajectory> trajectories_;
    DatasetStats stats_;
    std::vector<std::size_t> offsets_; // prefix sums of trajectory lengths
};

DatasetStats dataset_stats(const OfflineDataset& ds);

void write_dataset(std::ostream& os, const OfflineDataset& ds);
OfflineDataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const OfflineDataset& ds);
OfflineDataset load_dataset(const std::filesystem::path& path);

/// Scale factor 1000 / (maxR - minR); throws DegenerateDatasetError when maxR == minR.
double reward_scale(const OfflineDataset& ds);
OfflineDataset normalize_rewards(const OfflineDataset& ds);

/// Keeps the ceil(x * n) highest-return trajectories; ties keep the lower original index.
/// Surviving trajectories stay in their original order.
OfflineDataset top_fraction(const OfflineDataset& ds, double x);

enum class BatchView { transition, sarsa };

/// Columnar minibatch; columns are samples. a2 is meaningful only where a2_valid == 1.
struct Batch {
    Mat s;
    Mat a;
    Vec r;
    Mat s2;
    Vec done;
    Mat a2;
    Vec a2_valid;

    Eigen::Index size() const { return r.size(); }
};

/// Uniform i.i.d. draws over transitions. The sarsa view drops truncated last steps, which have no next action.
Batch sample_batch(const OfflineDataset& ds, int n, Rng& rng, BatchView view = BatchView::transition);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;

    std::size_t total() const;
};

/// Equal-width bins over [min, max]; values equal to max land in the last bin.
Histogram make_histogram(const std::vector<double>& values, int bins);
Histogram reward_histogram(const OfflineDataset& ds, int bins);
Histogram return_histogram(const OfflineDataset& ds, int bins);

std::vector<double> trajectory_returns(const OfflineDataset& ds);

} // namespace offbench::data
