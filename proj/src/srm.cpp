#include "cflnet/srm.hpp"

#include <algorithm>
#include <string>

#include "cflnet/errors.hpp"

namespace cflnet::srm {

namespace {

SrmKernelBank make_bank() {
    // clang-format off
    constexpr std::array<int, 25> k1 = { 0,  0,  0,  0,  0,
                                         0, -1,  2, -1,  0,
                                         0,  2, -4,  2,  0,
                                         0, -1,  2, -1,  0,
                                         0,  0,  0,  0,  0};
    constexpr std::array<int, 25> k2 = {-1,  2,  -2,  2, -1,
                                         2, -6,   8, -6,  2,
                                        -2,  8, -12,  8, -2,
                                         2, -6,   8, -6,  2,
                                        -1,  2,  -2,  2, -1};
    constexpr std::array<int, 25> k3 = { 0,  0,  0,  0,  0,
                                         0,  0,  0,  0,  0,
                                         0,  1, -2,  1,  0,
                                         0,  0,  0,  0,  0,
                                         0,  0,  0,  0,  0};
    // clang-format on
    SrmKernelBank bank{};
    const std::array<const std::array<int, 25>*, 3> raw = {&k1, &k2, &k3};
    const std::array<double, 3> scale = {4.0, 12.0, 2.0};
    for (int k = 0; k < kNumKernels; ++k) {
        bank.weights[k] = *raw[k];
        bank.normalizers[k] = scale[k];
        for (int i = 0; i < kKernelSize * kKernelSize; ++i)
            bank.kernels[k][i] = static_cast<double>((*raw[k])[i]) / scale[k];
    }
    return bank;
}

inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
}

void check_shape(std::size_t size, int channels, int height, int width) {
    if (channels != 3)
        throw InvalidInput("apply_srm: expected 3 channels, got " + std::to_string(channels));
    if (height < kKernelSize || width < kKernelSize)
        throw InvalidInput("apply_srm: image must be at least 5x5, got " + std::to_string(height) + "x" +
                           std::to_string(width));
    if (size != static_cast<std::size_t>(channels) * height * width)
        throw InvalidInput("apply_srm: buffer size does not match 3 x H x W");
}

// One output sample: mean over input planes of the correlation with `kernel`.
// Taps are the integer weights; the normalizer is applied once at the end so
// that constant regions cancel exactly.
template <class T>
double response_at(const T* img, int height, int width, const SrmKernelBank& bank, int k, int y, int x) {
    const auto& kernel = bank.weights[k];
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    double acc = 0.0;
    const bool interior = y >= 2 && x >= 2 && y < height - 2 && x < width - 2;
    for (int c = 0; c < 3; ++c) {
        const T* p = img + c * plane;
        for (int dy = -2; dy <= 2; ++dy) {
            const int yy = interior ? y + dy : reflect(y + dy, height);
            const T* row = p + static_cast<std::size_t>(yy) * width;
            const int* krow = kernel.data() + (dy + 2) * kKernelSize;
            for (int dx = -2; dx <= 2; ++dx) {
                const int xx = interior ? x + dx : reflect(x + dx, width);
                acc += krow[dx + 2] * static_cast<double>(row[xx]);
            }
        }
    }
    return acc / (3.0 * bank.normalizers[k]);
}

template <class T>
void clamp_inplace(std::vector<T>& v) {
    for (auto& x : v) x = std::clamp<T>(x, static_cast<T>(-kSrmClamp), static_cast<T>(kSrmClamp));
}

} // namespace

const SrmKernelBank& srm_kernels() {
    static const SrmKernelBank bank = make_bank();
    return bank;
}

template <class T>
std::vector<T> srm_response(std::span<const T> image, int channels, int height, int width) {
    check_shape(image.size(), channels, height, width);
    const auto& bank = srm_kernels();
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<T> out(3 * plane);
    const T* img = image.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < kNumKernels; ++k) {
        for (int y = 0; y < height; ++y) {
            T* orow = out.data() + k * plane + static_cast<std::size_t>(y) * width;
            for (int x = 0; x < width; ++x)
                orow[x] = static_cast<T>(response_at(img, height, width, bank, k, y, x));
        }
    }
    return out;
}

template <class T>
std::vector<T> apply_srm(std::span<const T> image, int channels, int height, int width) {
    auto out = srm_response(image, channels, height, width);
    clamp_inplace(out);
    return out;
}

namespace reference {

template <class T>
std::vector<T> srm_response(std::span<const T> image, int channels, int height, int width) {
    check_shape(image.size(), channels, height, width);
    const auto& bank = srm_kernels();
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<T> out(3 * plane);
    for (int k = 0; k < kNumKernels; ++k)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                out[k * plane + static_cast<std::size_t>(y) * width + x] =
                    static_cast<T>(response_at(image.data(), height, width, bank, k, y, x));
    return out;
}

template <class T>
std::vector<T> apply_srm(std::span<const T> image, int channels, int height, int width) {
    auto out = srm_response(image, channels, height, width);
    clamp_inplace(out);
    return out;
}

template std::vector<float> srm_response(std::span<const float>, int, int, int);
template std::vector<double> srm_response(std::span<const double>, int, int, int);
template std::vector<float> apply_srm(std::span<const float>, int, int, int);
template std::vector<double> apply_srm(std::span<const double>, int, int, int);

} // namespace reference

template std::vector<float> srm_response(std::span<const float>, int, int, int);
template std::vector<double> srm_response(std::span<const double>, int, int, int);
template std::vector<float> apply_srm(std::span<const float>, int, int, int);
template std::vector<double> apply_srm(std::span<const double>, int, int, int);

} // namespace cflnet::srm
