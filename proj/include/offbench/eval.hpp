#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "offbench/env.hpp"

namespace offbench::eval {

using Vec = Eigen::VectorXd;
using Policy = std::function<Vec(const Vec& obs)>;

struct EvalResult {
    double mean = 0.0;
    std::vector<double> returns;
};

/// Rolls out `episodes` full episodes with the given (deterministic) policy.
/// Episode i resets from its own rng stream derived from `seed`.
EvalResult evaluate(const Policy& policy, env::EnvId env, int episodes, std::uint64_t seed);

/// Evaluation points of one run. Steps are strictly increasing.
class EvalSeries {
public:
    struct Point {
        long step = 0;
        double mean = 0.0;
        std::vector<double> returns;
    };

    explicit EvalSeries(int window = 10);

    void add(long step, std::vector<double> returns);
    const std::vector<Point>& points() const { return points_; }
    std::vector<double> means() const;
    int window() const { return window_; }
    bool empty() const { return points_.empty(); }
    std::size_t size() const { return points_.size(); }

private:
    int window_;
    std::vector<Point> points_;
};

/// R_hat_t = mean of R over the last min(L, t+1) points ending at t.
std::vector<double> running_average(const std::vector<double>& values, int window);

struct Summary {
    double last_avg = 0.0;
    double best_avg = 0.0;
    double last_running_avg = 0.0;
};

Summary summarize(const std::vector<double>& means, int window);
Summary summarize(const EvalSeries& series);

/// 100 * (raw - random_ref) / (expert_ref - random_ref).
double normalized_score(double raw, double random_ref, double expert_ref);

void write_eval_csv(const std::filesystem::path& path, const EvalSeries& series);
EvalSeries read_eval_csv(const std::filesystem::path& path, int window);

} // namespace offbench::eval
