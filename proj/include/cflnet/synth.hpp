#pragma once

// Desk-scale synthetic forgeries: procedurally generated "authentic" scenes
// and three manipulation types applied to them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cflnet/data.hpp"

namespace cflnet {

enum class ForgeryOp { splice, copymove, removal };

ForgeryOp parse_forgery_op(const std::string& name);
std::string to_string(ForgeryOp op);

/// Deterministic RGB scene: gradient background, low-frequency texture,
/// filled shapes, mild blur and per-image Gaussian sensor noise whose level
/// is drawn from a low or a high band.
cv::Mat procedural_scene(std::uint64_t seed, int size);

/// One forged sample from `pool` (>= 2 images for splice, >= 1 otherwise).
///   splice:   random polygon from a donor pasted onto the host
///   copymove: polygon copied to a non-overlapping location in the host
///   removal:  polygon overwritten by the adjacent shifted background patch
/// The mask marks exactly the overwritten pixels. Throws InvalidInput for an
/// undersized pool and DataError if no region fits after bounded retries.
ForgerySample synth_forge(std::span<const cv::Mat> pool, std::uint64_t seed, ForgeryOp op);

struct SynthOptions {
    int count = 100;
    std::uint64_t seed = 0;
    int size = 256;
    std::string op = "mixed";  // splice | copymove | removal | mixed (cycles through all three)
};

/// `count` samples with ids sample_0000.., each built from its own pair of
/// procedural scenes derived from (seed, index).
std::vector<ForgerySample> synthesize(const SynthOptions& options);

/// Writes the samples plus all.txt and an 80/10/10 train/val/test split.
void write_dataset(const std::string& root, std::span<const ForgerySample> samples);

/// splitmix64 mixing of a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace cflnet
