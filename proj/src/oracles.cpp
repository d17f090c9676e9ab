#include "cflnet/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "cflnet/errors.hpp"

namespace cflnet::oracle {

double supcon_triple_loop(std::span<const double> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                          double tau) {
    auto sim = [&](int a, int b) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += embeddings[a * d + c] * embeddings[b * d + c];
        return s / tau;
    };
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        int positives = 0;
        double li = 0.0;
        for (int p = 0; p < n; ++p) {
            if (p == i || labels[p] != labels[i]) continue;
            ++positives;
            double den = std::exp(sim(i, p));
            for (int q = 0; q < n; ++q)
                if (labels[q] != labels[i]) den += std::exp(sim(i, q));
            li += -std::log(std::exp(sim(i, p)) / den);
        }
        if (positives > 0) total += li / positives;
    }
    return total / n;
}

double pixel_supcon_oracle(std::span<const double> feature, int channels, int height, int width,
                           std::span<const std::uint8_t> mask, double tau) {
    const int n = height * width;
    if (n > 256) throw InvalidInput("pixel_supcon_oracle: refusing maps with more than 256 pixels");
    if (feature.size() != static_cast<std::size_t>(channels) * n || mask.size() != static_cast<std::size_t>(n))
        throw InvalidInput("pixel_supcon_oracle: size mismatch");
    std::vector<double> z(static_cast<std::size_t>(n) * channels);
    for (int p = 0; p < n; ++p) {
        double sq = 0.0;
        for (int c = 0; c < channels; ++c) sq += feature[c * n + p] * feature[c * n + p];
        const double norm = std::sqrt(sq);
        for (int c = 0; c < channels; ++c) z[p * channels + c] = feature[c * n + p] / norm;
    }
    std::vector<std::uint8_t> labels(mask.begin(), mask.end());
    return supcon_triple_loop(z, n, channels, labels, tau);
}

std::vector<double> pool_nested_loop(std::span<const double> feature, int channels, int height, int width, int k) {
    const int h = height / k, w = width / k;
    std::vector<double> out(static_cast<std::size_t>(k) * k * channels, 0.0);
    for (int py = 0; py < k; ++py)
        for (int px = 0; px < k; ++px) {
            const int i = py * k + px;
            for (int c = 0; c < channels; ++c) {
                double sum = 0.0;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) sum += feature[(c * height + py * h + y) * width + px * w + x];
                out[i * channels + c] = sum / (h * w);
            }
            double sq = 0.0;
            for (int c = 0; c < channels; ++c) sq += out[i * channels + c] * out[i * channels + c];
            if (sq > 0.0)
                for (int c = 0; c < channels; ++c) out[i * channels + c] /= std::sqrt(sq);
        }
    return out;
}

std::vector<std::uint8_t> majority_nested_loop(std::span<const std::uint8_t> mask, int height, int width, int k) {
    const int h = height / k, w = width / k;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(k) * k);
    for (int py = 0; py < k; ++py)
        for (int px = 0; px < k; ++px) {
            int zeros = 0, ones = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) (mask[(py * h + y) * width + px * w + x] ? ones : zeros) += 1;
            out[py * k + px] = ones >= zeros ? 1 : 0;
        }
    return out;
}

std::vector<double> srm_direct(std::span<const double> image, int height, int width) {
    // clang-format off
    const double k1[25] = { 0, 0, 0, 0, 0,   0,-1, 2,-1, 0,   0, 2,-4, 2, 0,   0,-1, 2,-1, 0,   0, 0, 0, 0, 0};
    const double k2[25] = {-1, 2,-2, 2,-1,   2,-6, 8,-6, 2,  -2, 8,-12,8,-2,   2,-6, 8,-6, 2,  -1, 2,-2, 2,-1};
    const double k3[25] = { 0, 0, 0, 0, 0,   0, 0, 0, 0, 0,   0, 1,-2, 1, 0,   0, 0, 0, 0, 0,   0, 0, 0, 0, 0};
    // clang-format on
    const double* kernels[3] = {k1, k2, k3};
    const double norms[3] = {4.0, 12.0, 2.0};
    const int ph = height + 4, pw = width + 4;
    std::vector<double> padded(3 * static_cast<std::size_t>(ph) * pw);
    auto mirror = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                padded[(c * ph + y) * pw + x] = image[(c * height + mirror(y - 2, height)) * width + mirror(x - 2, width)];
    std::vector<double> out(3 * static_cast<std::size_t>(height) * width, 0.0);
    for (int k = 0; k < 3; ++k)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double acc = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int u = 0; u < 5; ++u)
                        for (int v = 0; v < 5; ++v) acc += kernels[k][u * 5 + v] * padded[(c * ph + y + u) * pw + x + v];
                out[(k * height + y) * width + x] = acc / norms[k] / 3.0;
            }
    return out;
}

double auc_pair_counting(std::span<const double> scores, std::span<const std::uint8_t> mask) {
    double credit = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (mask[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    if (pairs == 0) throw InvalidInput("auc_pair_counting: mask must contain both classes");
    return credit / static_cast<double>(pairs);
}

double central_difference(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                          std::size_t index, double step) {
    const double x0 = x[index];
    x[index] = x0 + step;
    const double up = f(x);
    x[index] = x0 - step;
    const double down = f(x);
    return (up - down) / (2.0 * step);
}

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace cflnet::oracle
