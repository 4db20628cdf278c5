#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace offbench {

using Rng = std::mt19937_64;

/// Independent stream `stream` derived from a base seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

inline Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            out(i, j) = dist(rng);
    return out;
}

inline Eigen::MatrixXd uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            out(i, j) = dist(rng);
    return out;
}

} // namespace offbench
