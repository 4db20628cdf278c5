#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "offbench/agent.hpp"
#include "offbench/dataset.hpp"
#include "offbench/eval.hpp"

namespace offbench::algo {

struct TrainOptions {
    /// Run directory for config.json, losses.csv, eval.csv and the final checkpoint.
    /// Empty keeps everything in memory.
    std::filesystem::path out_dir;
    /// Extra provenance merged into config.json (dataset path, command line, ...).
    nlohmann::json provenance = nlohmann::json::object();
};

struct TrainResult {
    eval::EvalSeries series;
    eval::Summary summary;
    long steps = 0;
};

/// Dataset actually used for gradient steps: the top-fraction filter for pct_bc,
/// then reward normalization when enabled.
data::OfflineDataset training_dataset(AlgoId algo, const data::OfflineDataset& ds, const ChoiceConfig& cfg);

/// Gradient loop with evaluations at step 0, every eval_every steps and at the end.
/// Evaluation uses the raw environment of the dataset. A non-finite loss writes
/// `nan_snapshot/` into the run directory and throws NumericError.
TrainResult train(AlgoId algo, const data::OfflineDataset& ds, const ChoiceConfig& cfg,
                  const TrainOptions& options = {});

} // namespace offbench::algo
