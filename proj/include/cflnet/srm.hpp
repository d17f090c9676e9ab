#pragma once

// SRM noise-residual stream input.
//
// Images are planar (channel-major) buffers of 3 x H x W values in [0, 255].
// The residual has the same layout. Channel c of the residual is the mean over
// the three colour planes of their correlation with SRM kernel c, using
// reflect padding (mirror without repeating the edge sample), clamped to
// [-kSrmClamp, kSrmClamp].

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cflnet::srm {

inline constexpr int kKernelSize = 5;
inline constexpr int kNumKernels = 3;
inline constexpr double kSrmClamp = 3.0;

using Kernel = std::array<double, kKernelSize * kKernelSize>;

struct SrmKernelBank {
    std::array<Kernel, kNumKernels> kernels;  // scaled by 1 / normalizer
    std::array<std::array<int, kKernelSize * kKernelSize>, kNumKernels> weights;  // integer taps
    std::array<double, kNumKernels> normalizers;
};

/// The three fixed high-pass kernels, already multiplied by 1/4, 1/12 and 1/2.
const SrmKernelBank& srm_kernels();

/// Raw (unclamped) residual. Throws InvalidInput if channels != 3 or H, W < 5.
template <class T>
std::vector<T> srm_response(std::span<const T> image, int channels, int height, int width);

/// Clamped residual used as the second-stream input.
template <class T>
std::vector<T> apply_srm(std::span<const T> image, int channels, int height, int width);

namespace reference {
// Single-threaded versions kept as the baseline for the parallel kernels.
template <class T>
std::vector<T> srm_response(std::span<const T> image, int channels, int height, int width);
template <class T>
std::vector<T> apply_srm(std::span<const T> image, int channels, int height, int width);
} // namespace reference

} // namespace cflnet::srm
