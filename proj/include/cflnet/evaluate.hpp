#pragma once

// Model-level evaluation: per-image pixel AUC, the train x eval grid and the
// class-mean feature export.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cflnet/data.hpp"
#include "cflnet/metrics.hpp"
#include "cflnet/model.hpp"

namespace cflnet {

/// Tampered-class softmax probability (S x S) for one preprocessed 3 x S x S
/// image. Runs in evaluation mode without the projection head.
torch::Tensor predict_probability(CflNet& model, const torch::Tensor& image);

/// Per-image AUC of the tampered probability against the mask, averaged over
/// images with both classes; single-class images are skipped and counted.
/// Throws DataError on an empty dataset or when no image can be scored.
metrics::EvalReport evaluate_model(CflNet& model, std::span<const ForgerySample> dataset);

struct NamedDataset {
    std::string name;
    std::vector<ForgerySample> samples;
};

struct CrossEvalGrid {
    std::vector<std::string> trained_on;
    std::vector<std::string> evaluated_on;
    std::vector<std::vector<double>> mean_auc;  // [trained_on][evaluated_on]
};

/// Loads each (train-set name, checkpoint path) and evaluates it on every
/// dataset. All checkpoints must share one input size; a mismatch throws
/// DataError naming both checkpoints.
CrossEvalGrid cross_dataset_eval(const std::vector<std::pair<std::string, std::string>>& checkpoints,
                                 std::span<const NamedDataset> datasets);

/// Tab-separated grid with a version header; rows = trained on, columns = evaluated on.
std::string format_cross_eval(const CrossEvalGrid& grid);

/// Masked means of the segmentation head's penultimate map per ground-truth
/// class (class 1 only for images with tampered pixels).
std::vector<metrics::ClassMeanFeature> export_mean_features(CflNet& model, std::span<const ForgerySample> dataset);

/// Stable 64-bit FNV-1a hex digest.
std::string fnv1a_hex(const std::string& text);

} // namespace cflnet
