#pragma once

// Threshold-free scoring of tamper-probability maps.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cflnet::metrics {

/// ROC AUC of `scores` against a binary mask via the Mann-Whitney rank
/// statistic, tied scores sharing their average rank. Returns nullopt when the
/// mask holds a single class (AUC undefined). Throws InvalidInput on size
/// mismatch or non-binary masks.
std::optional<double> pixel_auc(std::span<const float> scores, std::span<const std::uint8_t> mask);
std::optional<double> pixel_auc(std::span<const double> scores, std::span<const std::uint8_t> mask);

struct ImageAuc {
    std::string id;
    double auc = 0.0;
};

struct EvalReport {
    std::vector<ImageAuc> per_image;
    std::vector<std::string> skipped_ids;  // single-class masks
    double mean_auc = 0.0;
    int skipped = 0;
    std::string config_hash;
};

/// Arithmetic mean of per-image AUCs; throws DataError if nothing was scored.
double mean_auc(std::span<const ImageAuc> per_image);

/// Versioned tab-separated report: header, one row per image, summary block.
std::string format_report(const EvalReport& report);

/// One exported class-mean vector (class 0 = untampered, 1 = tampered).
struct ClassMeanFeature {
    std::string id;
    int label = 0;
    std::vector<double> values;
};

struct SeparationStats {
    double within = 0.0;   // mean cosine over same-class pairs from different images
    double between = 0.0;  // mean cosine over cross-class pairs
    double gap() const { return within - between; }
};

/// Pairwise cosine statistics of exported class-mean features.
SeparationStats feature_separation(std::span<const ClassMeanFeature> features);

/// "# cflnet-features v1" header, then `id,class,v0,...` rows.
std::string format_features(std::span<const ClassMeanFeature> features);

} // namespace cflnet::metrics
