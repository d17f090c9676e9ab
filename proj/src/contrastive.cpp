#include "cflnet/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cflnet/errors.hpp"

namespace cflnet::contrastive {

namespace {

constexpr double kUnitTolerance = 1e-3;

void check_grid(int height, int width, int k, const char* what) {
    if (k <= 0) throw InvalidInput(std::string(what) + ": grid size must be positive");
    if (height % k != 0 || width % k != 0)
        throw InvalidInput(std::string(what) + ": grid " + std::to_string(k) + " does not divide " +
                           std::to_string(height) + "x" + std::to_string(width));
}

void check_mask(std::span<const std::uint8_t> mask, int height, int width) {
    if (mask.size() != static_cast<std::size_t>(height) * width)
        throw InvalidInput("mask size does not match H x W");
    for (auto v : mask)
        if (v > 1) throw InvalidInput("mask must be binary (0/1), found value " + std::to_string(v));
}

template <class T>
void check_supcon_inputs(std::span<const T> emb, int n, int d, std::span<const std::uint8_t> labels, double tau,
                         std::span<const std::uint8_t> valid) {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw InvalidParameter("supcon_loss: temperature must be positive, got " + std::to_string(tau));
    if (n < 1 || d < 1) throw InvalidInput("supcon_loss: need at least one embedding");
    if (emb.size() != static_cast<std::size_t>(n) * d) throw InvalidInput("supcon_loss: embedding buffer is not n x d");
    if (labels.size() != static_cast<std::size_t>(n)) throw InvalidInput("supcon_loss: labels length != n");
    if (!valid.empty() && valid.size() != static_cast<std::size_t>(n))
        throw InvalidInput("supcon_loss: validity mask length != n");
    for (int i = 0; i < n; ++i) {
        if (labels[i] > 1) throw InvalidInput("supcon_loss: labels must be binary");
        if (!valid.empty() && !valid[i]) continue;
        double sq = 0.0;
        for (int c = 0; c < d; ++c) sq += static_cast<double>(emb[i * d + c]) * emb[i * d + c];
        if (std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance)
            throw InvalidInput("supcon_loss: row " + std::to_string(i) + " is not unit norm (norm " +
                               std::to_string(std::sqrt(sq)) + ")");
    }
}

inline bool is_valid(std::span<const std::uint8_t> valid, int i) { return valid.empty() || valid[i] != 0; }

template <class T>
PatchEmbeddings<T> make_pooled(int channels, int height, int width, int k) {
    PatchEmbeddings<T> out;
    out.grid = k;
    out.count = k * k;
    out.dim = channels;
    out.patch_h = height / k;
    out.patch_w = width / k;
    out.embeddings.assign(static_cast<std::size_t>(out.count) * channels, T{0});
    out.norms.assign(out.count, T{0});
    out.valid.assign(out.count, 0);
    return out;
}

template <class T>
void normalize_row(PatchEmbeddings<T>& out, int i) {
    T* row = out.embeddings.data() + static_cast<std::size_t>(i) * out.dim;
    double sq = 0.0;
    for (int c = 0; c < out.dim; ++c) sq += static_cast<double>(row[c]) * row[c];
    const double norm = std::sqrt(sq);
    out.norms[i] = static_cast<T>(norm);
    if (norm > 0.0 && std::isfinite(norm) && static_cast<T>(norm) > std::numeric_limits<T>::min()) {
        out.valid[i] = 1;
        for (int c = 0; c < out.dim; ++c) row[c] = static_cast<T>(row[c] / norm);
    } else {
        out.valid[i] = 0;
        std::fill(row, row + out.dim, T{0});
    }
}

// Per-anchor quantities shared by the loss and its gradient. All exponentials
// are taken relative to `shift`, the anchor's largest similarity logit.
struct AnchorStats {
    double shift = 0.0;
    double neg_sum = 0.0;      // sum over negatives of exp(s - shift)
    double inv_den_sum = 0.0;  // sum over positives of 1 / (exp(s_p - shift) + neg_sum)
    int positives = 0;
    double loss = 0.0;         // L_i
};

// -log(e_p / (e_p + neg_sum)) with e_p = exp(shifted_pos); exactly 0 without negatives.
inline double anchor_term(double shifted_pos, double e_p, double neg_sum) {
    if (neg_sum == 0.0) return 0.0;
    if (e_p > 0.0) return std::log1p(neg_sum / e_p);
    return std::log(e_p + neg_sum) - shifted_pos;
}

inline double dot(const double* a, const double* b, int d) {
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (int c = 0; c < d; ++c) s += a[c] * b[c];
    return s;
}

template <class T>
std::vector<double> to_double(std::span<const T> v) {
    return std::vector<double>(v.begin(), v.end());
}

void anchor_stats(const double* emb, int n, int d, std::span<const std::uint8_t> labels, double inv_tau,
                  std::span<const std::uint8_t> valid, int i, std::vector<double>& row, AnchorStats& st) {
    st = AnchorStats{};
    if (!is_valid(valid, i)) return;
    const double* ei = emb + static_cast<std::size_t>(i) * d;
    double shift = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < n; ++j) {
        if (j == i || !is_valid(valid, j)) continue;
        row[j] = dot(ei, emb + static_cast<std::size_t>(j) * d, d) * inv_tau;
        shift = std::max(shift, row[j]);
        any = true;
    }
    if (!any) return;
    st.shift = shift;
    for (int j = 0; j < n; ++j) {
        if (j == i || !is_valid(valid, j)) continue;
        if (labels[j] != labels[i]) st.neg_sum += std::exp(row[j] - shift);
    }
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j == i || !is_valid(valid, j) || labels[j] != labels[i]) continue;
        const double sp = row[j] - shift;
        const double ep = std::exp(sp);
        const double den = ep + st.neg_sum;
        acc += anchor_term(sp, ep, st.neg_sum);
        st.inv_den_sum += 1.0 / den;
        ++st.positives;
    }
    if (st.positives > 0) st.loss = acc / st.positives;
}

// dL/ds_ij seen from anchor i, where `scale` = 1 / (n |A_i|).
inline double pair_grad(const AnchorStats& st, double scale, double s, bool same_label) {
    if (scale == 0.0) return 0.0;
    const double e = std::exp(s - st.shift);
    if (same_label) return scale * (e / (e + st.neg_sum) - 1.0);
    return scale * e * st.inv_den_sum;
}

template <class T>
SupConResult supcon_impl(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                         double tau, std::span<T> grad, std::span<const std::uint8_t> valid, bool want_grad) {
    check_supcon_inputs(embeddings, n, d, labels, tau, valid);
    const std::vector<double> emb = to_double(embeddings);
    const double inv_tau = 1.0 / tau;
    std::vector<AnchorStats> stats(n);

#pragma omp parallel
    {
        std::vector<double> row(n);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) anchor_stats(emb.data(), n, d, labels, inv_tau, valid, i, row, stats[i]);
    }

    SupConResult result;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        total += stats[i].loss;
        if (stats[i].positives > 0) ++result.anchors_used;
    }
    result.loss = total / n;

    if (want_grad) {
        if (grad.size() != static_cast<std::size_t>(n) * d) throw InvalidInput("supcon_loss_grad: grad buffer is not n x d");
        std::vector<double> scale(n, 0.0);
        for (int i = 0; i < n; ++i)
            if (stats[i].positives > 0) scale[i] = 1.0 / (static_cast<double>(n) * stats[i].positives);
        // Row-wise gather: df_i = sum_j (G_ij + G_ji) f_j / tau, so threads never share output rows.
#pragma omp parallel
        {
            std::vector<double> g(d);
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
                std::fill(g.begin(), g.end(), 0.0);
                if (is_valid(valid, i)) {
                    const double* ei = emb.data() + static_cast<std::size_t>(i) * d;
                    for (int j = 0; j < n; ++j) {
                        if (j == i || !is_valid(valid, j)) continue;
                        if (scale[i] == 0.0 && scale[j] == 0.0) continue;
                        const double* ej = emb.data() + static_cast<std::size_t>(j) * d;
                        const double s = dot(ei, ej, d) * inv_tau;
                        const bool same = labels[i] == labels[j];
                        const double w =
                            (pair_grad(stats[i], scale[i], s, same) + pair_grad(stats[j], scale[j], s, same)) * inv_tau;
#pragma omp simd
                        for (int c = 0; c < d; ++c) g[c] += w * ej[c];
                    }
                }
                T* out = grad.data() + static_cast<std::size_t>(i) * d;
                for (int c = 0; c < d; ++c) out[c] = static_cast<T>(g[c]);
            }
        }
    }
    return result;
}

} // namespace

template <class T>
PatchEmbeddings<T> partition_and_pool(std::span<const T> feature, int channels, int height, int width, int k) {
    check_grid(height, width, k, "partition_and_pool");
    if (channels < 1 || feature.size() != static_cast<std::size_t>(channels) * height * width)
        throw InvalidInput("partition_and_pool: feature buffer is not C x H x W");
    auto out = make_pooled<T>(channels, height, width, k);
    const int ph = out.patch_h, pw = out.patch_w;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    const double inv_area = 1.0 / (static_cast<double>(ph) * pw);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < out.count; ++i) {
        const int py = i / k, px = i % k;
        T* row = out.embeddings.data() + static_cast<std::size_t>(i) * channels;
        for (int c = 0; c < channels; ++c) {
            const T* p = feature.data() + c * plane;
            double acc = 0.0;
            for (int y = py * ph; y < (py + 1) * ph; ++y) {
                const T* r = p + static_cast<std::size_t>(y) * width + px * pw;
                for (int x = 0; x < pw; ++x) acc += r[x];
            }
            row[c] = static_cast<T>(acc * inv_area);
        }
        normalize_row(out, i);
    }
    return out;
}

std::vector<std::uint8_t> downsample_mask_majority(std::span<const std::uint8_t> mask, int height, int width, int k) {
    check_grid(height, width, k, "downsample_mask_majority");
    check_mask(mask, height, width);
    const int ph = height / k, pw = width / k;
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(k) * k);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k * k; ++i) {
        const int py = i / k, px = i % k;
        int ones = 0;
        for (int y = py * ph; y < (py + 1) * ph; ++y)
            for (int x = px * pw; x < (px + 1) * pw; ++x) ones += mask[static_cast<std::size_t>(y) * width + x];
        labels[i] = 2 * ones >= ph * pw ? 1 : 0;
    }
    return labels;
}

template <class T>
SupConResult supcon_loss(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                         double tau, std::span<const std::uint8_t> valid) {
    return supcon_impl<T>(embeddings, n, d, labels, tau, {}, valid, false);
}

template <class T>
SupConResult supcon_loss_grad(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                              double tau, std::span<T> grad, std::span<const std::uint8_t> valid) {
    return supcon_impl<T>(embeddings, n, d, labels, tau, grad, valid, true);
}

template <class T>
std::vector<T> normalize_backward(const PatchEmbeddings<T>& pooled, std::span<const T> grad_unit) {
    const int d = pooled.dim;
    if (grad_unit.size() != static_cast<std::size_t>(pooled.count) * d)
        throw InvalidInput("normalize_backward: gradient buffer is not count x dim");
    std::vector<T> out(grad_unit.size(), T{0});
#pragma omp parallel for schedule(static)
    for (int i = 0; i < pooled.count; ++i) {
        if (!pooled.valid[i]) continue;
        const T* f = pooled.embeddings.data() + static_cast<std::size_t>(i) * d;
        const T* g = grad_unit.data() + static_cast<std::size_t>(i) * d;
        double proj = 0.0;
        for (int c = 0; c < d; ++c) proj += static_cast<double>(f[c]) * g[c];
        const double inv_norm = 1.0 / static_cast<double>(pooled.norms[i]);
        T* o = out.data() + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) o[c] = static_cast<T>((g[c] - f[c] * proj) * inv_norm);
    }
    return out;
}

template <class T>
std::vector<T> pool_backward(const PatchEmbeddings<T>& pooled, std::span<const T> grad_mean, int height, int width) {
    const int k = pooled.grid, d = pooled.dim, ph = pooled.patch_h, pw = pooled.patch_w;
    if (ph * k != height || pw * k != width) throw InvalidInput("pool_backward: spatial size does not match the grid");
    if (grad_mean.size() != static_cast<std::size_t>(pooled.count) * d)
        throw InvalidInput("pool_backward: gradient buffer is not count x dim");
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    std::vector<T> out(plane * d);
    const double inv_area = 1.0 / (static_cast<double>(ph) * pw);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < d; ++c) {
        T* p = out.data() + c * plane;
        for (int y = 0; y < height; ++y) {
            const int py = y / ph;
            for (int x = 0; x < width; ++x) {
                const int i = py * k + x / pw;
                p[static_cast<std::size_t>(y) * width + x] =
                    static_cast<T>(grad_mean[static_cast<std::size_t>(i) * d + c] * inv_area);
            }
        }
    }
    return out;
}

template <class T>
PatchLoss<T> patch_supcon(std::span<const T> feature, int channels, int height, int width,
                          std::span<const std::uint8_t> mask, int mask_height, int mask_width, int k, double tau,
                          bool want_grad) {
    auto pooled = partition_and_pool(feature, channels, height, width, k);
    const auto labels = downsample_mask_majority(mask, mask_height, mask_width, k);
    PatchLoss<T> out;
    if (!want_grad) {
        const auto r = supcon_loss<T>(pooled.embeddings, pooled.count, channels, labels, tau, pooled.valid);
        out.loss = r.loss;
        out.anchors_used = r.anchors_used;
        return out;
    }
    std::vector<T> grad_unit(pooled.embeddings.size());
    const auto r =
        supcon_loss_grad<T>(pooled.embeddings, pooled.count, channels, labels, tau, grad_unit, pooled.valid);
    out.loss = r.loss;
    out.anchors_used = r.anchors_used;
    const auto grad_mean = normalize_backward<T>(pooled, grad_unit);
    out.grad = pool_backward<T>(pooled, grad_mean, height, width);
    return out;
}

namespace reference {

template <class T>
PatchEmbeddings<T> partition_and_pool(std::span<const T> feature, int channels, int height, int width, int k) {
    check_grid(height, width, k, "partition_and_pool");
    if (channels < 1 || feature.size() != static_cast<std::size_t>(channels) * height * width)
        throw InvalidInput("partition_and_pool: feature buffer is not C x H x W");
    auto out = make_pooled<T>(channels, height, width, k);
    const int ph = out.patch_h, pw = out.patch_w;
    std::vector<double> acc(static_cast<std::size_t>(out.count) * channels, 0.0);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const int i = (y / ph) * k + x / pw;
                acc[static_cast<std::size_t>(i) * channels + c] +=
                    feature[(static_cast<std::size_t>(c) * height + y) * width + x];
            }
    for (std::size_t j = 0; j < acc.size(); ++j)
        out.embeddings[j] = static_cast<T>(acc[j] / (static_cast<double>(ph) * pw));
    for (int i = 0; i < out.count; ++i) normalize_row(out, i);
    return out;
}

std::vector<std::uint8_t> downsample_mask_majority(std::span<const std::uint8_t> mask, int height, int width, int k) {
    check_grid(height, width, k, "downsample_mask_majority");
    check_mask(mask, height, width);
    const int ph = height / k, pw = width / k;
    std::vector<int> ones(static_cast<std::size_t>(k) * k, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) ones[(y / ph) * k + x / pw] += mask[static_cast<std::size_t>(y) * width + x];
    std::vector<std::uint8_t> labels(ones.size());
    for (std::size_t i = 0; i < ones.size(); ++i) labels[i] = ones[i] >= ph * pw - ones[i] ? 1 : 0;
    return labels;
}

namespace {

// Full similarity matrix, then per-anchor loss and an explicit n x n matrix of dL/ds.
template <class T>
SupConResult supcon_reference(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                              double tau, std::span<T> grad, std::span<const std::uint8_t> valid, bool want_grad) {
    check_supcon_inputs(embeddings, n, d, labels, tau, valid);
    std::vector<double> sim(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += static_cast<double>(embeddings[i * d + c]) * embeddings[j * d + c];
            sim[static_cast<std::size_t>(i) * n + j] = s / tau;
        }
    std::vector<double> dsim(want_grad ? sim.size() : 0, 0.0);
    SupConResult result;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!is_valid(valid, i)) continue;
        const double* si = sim.data() + static_cast<std::size_t>(i) * n;
        double shift = -std::numeric_limits<double>::infinity();
        int positives = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i || !is_valid(valid, j)) continue;
            shift = std::max(shift, si[j]);
            if (labels[j] == labels[i]) ++positives;
        }
        if (positives == 0) continue;
        ++result.anchors_used;
        double neg = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i && is_valid(valid, j) && labels[j] != labels[i]) neg += std::exp(si[j] - shift);
        const double w = 1.0 / (static_cast<double>(n) * positives);
        double li = 0.0;
        for (int p = 0; p < n; ++p) {
            if (p == i || !is_valid(valid, p) || labels[p] != labels[i]) continue;
            const double ep = std::exp(si[p] - shift);
            const double den = ep + neg;
            li += anchor_term(si[p] - shift, ep, neg);
            if (want_grad) {
                double* g = dsim.data() + static_cast<std::size_t>(i) * n;
                g[p] += w * (ep / den - 1.0);
                for (int q = 0; q < n; ++q)
                    if (q != i && is_valid(valid, q) && labels[q] != labels[i]) g[q] += w * std::exp(si[q] - shift) / den;
            }
        }
        total += li / positives;
    }
    result.loss = total / n;
    if (want_grad) {
        if (grad.size() != static_cast<std::size_t>(n) * d) throw InvalidInput("supcon_loss_grad: grad buffer is not n x d");
        std::vector<double> g(grad.size(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double w = dsim[static_cast<std::size_t>(i) * n + j] / tau;
                if (w == 0.0) continue;
                for (int c = 0; c < d; ++c) {
                    g[i * d + c] += w * embeddings[j * d + c];
                    g[j * d + c] += w * embeddings[i * d + c];
                }
            }
        for (std::size_t j = 0; j < g.size(); ++j) grad[j] = static_cast<T>(g[j]);
    }
    return result;
}

} // namespace

template <class T>
SupConResult supcon_loss(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                         double tau, std::span<const std::uint8_t> valid) {
    return supcon_reference<T>(embeddings, n, d, labels, tau, {}, valid, false);
}

template <class T>
SupConResult supcon_loss_grad(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                              double tau, std::span<T> grad, std::span<const std::uint8_t> valid) {
    return supcon_reference<T>(embeddings, n, d, labels, tau, grad, valid, true);
}

#define CFLNET_INSTANTIATE_REFERENCE(T)                                                                              \
    template PatchEmbeddings<T> partition_and_pool(std::span<const T>, int, int, int, int);                          \
    template SupConResult supcon_loss(std::span<const T>, int, int, std::span<const std::uint8_t>, double,           \
                                      std::span<const std::uint8_t>);                                                \
    template SupConResult supcon_loss_grad(std::span<const T>, int, int, std::span<const std::uint8_t>, double,      \
                                           std::span<T>, std::span<const std::uint8_t>);
CFLNET_INSTANTIATE_REFERENCE(float)
CFLNET_INSTANTIATE_REFERENCE(double)
#undef CFLNET_INSTANTIATE_REFERENCE

} // namespace reference

#define CFLNET_INSTANTIATE(T)                                                                                        \
    template PatchEmbeddings<T> partition_and_pool(std::span<const T>, int, int, int, int);                          \
    template SupConResult supcon_loss(std::span<const T>, int, int, std::span<const std::uint8_t>, double,           \
                                      std::span<const std::uint8_t>);                                                \
    template SupConResult supcon_loss_grad(std::span<const T>, int, int, std::span<const std::uint8_t>, double,      \
                                           std::span<T>, std::span<const std::uint8_t>);                             \
    template std::vector<T> normalize_backward(const PatchEmbeddings<T>&, std::span<const T>);                       \
    template std::vector<T> pool_backward(const PatchEmbeddings<T>&, std::span<const T>, int, int);                  \
    template PatchLoss<T> patch_supcon(std::span<const T>, int, int, int, std::span<const std::uint8_t>, int, int,   \
                                       int, double, bool);
CFLNET_INSTANTIATE(float)
CFLNET_INSTANTIATE(double)
#undef CFLNET_INSTANTIATE

} // namespace cflnet::contrastive
