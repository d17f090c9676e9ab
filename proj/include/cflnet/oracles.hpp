#pragma once

// Brute-force references. Nothing here shares code with the production
// kernels; they exist so tests and `cflnet selftest` can check the kernels
// against literal transcriptions of the definitions.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cflnet::oracle {

/// Literal triple loop over anchors, positives and negatives. No max-shift.
/// Anchors without positives contribute 0; result averaged over all n rows.
double supcon_triple_loop(std::span<const double> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                          double tau);

/// Per-pixel contrastive loss over every pixel of F (after unit
/// normalisation of each pixel vector). Refuses maps with H*W > 256.
double pixel_supcon_oracle(std::span<const double> feature, int channels, int height, int width,
                           std::span<const std::uint8_t> mask, double tau);

/// Mean-then-normalise pooling with six nested loops; row-major patch order.
std::vector<double> pool_nested_loop(std::span<const double> feature, int channels, int height, int width, int k);

/// Majority vote by explicit zero/one counting; ties resolve to 1.
std::vector<std::uint8_t> majority_nested_loop(std::span<const std::uint8_t> mask, int height, int width, int k);

/// Correlation of each colour plane with each SRM kernel over an explicitly
/// reflect-padded copy of the image, averaged over planes. No clamping.
std::vector<double> srm_direct(std::span<const double> image, int height, int width);

/// Fraction of (tampered, authentic) pixel pairs ranked correctly, ties
/// counted as one half. Requires both classes present.
double auc_pair_counting(std::span<const double> scores, std::span<const std::uint8_t> mask);

/// Central finite difference of f at x[index] with the given step.
double central_difference(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                          std::size_t index, double step);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-6);

} // namespace cflnet::oracle
