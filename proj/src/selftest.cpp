#include "cflnet/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cflnet/contrastive.hpp"
#include "cflnet/metrics.hpp"
#include "cflnet/oracles.hpp"
#include "cflnet/srm.hpp"

namespace cflnet::selftest {

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian(Rng& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

std::vector<std::uint8_t> bits(Rng& rng, std::size_t n, double p = 0.5) {
    std::bernoulli_distribution b(p);
    std::vector<std::uint8_t> v(n);
    for (auto& x : v) x = b(rng) ? 1 : 0;
    return v;
}

void normalize_rows(std::vector<double>& v, int n, int d) {
    for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < d; ++c) sq += v[i * d + c] * v[i * d + c];
        for (int c = 0; c < d; ++c) v[i * d + c] /= std::sqrt(sq);
    }
}

OracleCheck finish(OracleCheck c) {
    c.passed = c.max_error <= c.tolerance;
    return c;
}

} // namespace

OracleCheck check_supcon_oracle(int instances, std::uint64_t seed, double tau_scale) {
    OracleCheck c{"supcon-oracle", instances, 0.0, 1e-6, false, ""};
    Rng rng(seed);
    const double taus[] = {0.05, 0.1, 0.5};
    for (int t = 0; t < instances; ++t) {
        const int n = std::uniform_int_distribution<int>(1, 64)(rng);
        const int d = std::uniform_int_distribution<int>(1, 16)(rng);
        const double tau = taus[t % 3];
        auto emb = gaussian(rng, static_cast<std::size_t>(n) * d);
        normalize_rows(emb, n, d);
        const auto labels = bits(rng, n, std::uniform_real_distribution<double>(0.1, 0.9)(rng));
        const double expected = oracle::supcon_triple_loop(emb, n, d, labels, tau);
        const double got = contrastive::supcon_loss<double>(emb, n, d, labels, tau * tau_scale).loss;
        c.max_error = std::max(c.max_error, oracle::relative_error(got, expected, 1e-12));
    }
    return finish(c);
}

OracleCheck check_pooling(int instances, std::uint64_t seed) {
    OracleCheck c{"pooling-majority", instances, 0.0, 1e-7, false, ""};
    Rng rng(seed);
    int label_mismatches = 0;
    for (int t = 0; t < instances; ++t) {
        int channels, k, ph, pw;
        if (t == 0) {
            channels = 256, k = 4, ph = 2, pw = 2;  // 8x8 map, 4x4 grid, 4 vectors per patch
        } else {
            channels = std::uniform_int_distribution<int>(1, 32)(rng);
            k = std::uniform_int_distribution<int>(1, 8)(rng);
            ph = std::uniform_int_distribution<int>(1, 4)(rng);
            pw = std::uniform_int_distribution<int>(1, 4)(rng);
        }
        const int h = k * ph, w = k * pw;
        const auto feat = gaussian(rng, static_cast<std::size_t>(channels) * h * w);
        const auto mask = bits(rng, static_cast<std::size_t>(h) * w, std::uniform_real_distribution<double>(0, 1)(rng));
        const auto pooled = contrastive::partition_and_pool<double>(feat, channels, h, w, k);
        const auto expected = oracle::pool_nested_loop(feat, channels, h, w, k);
        for (std::size_t i = 0; i < expected.size(); ++i)
            c.max_error = std::max(c.max_error, std::abs(pooled.embeddings[i] - expected[i]));
        if (contrastive::downsample_mask_majority(mask, h, w, k) != oracle::majority_nested_loop(mask, h, w, k))
            ++label_mismatches;
    }
    c.detail = "label mismatches " + std::to_string(label_mismatches);
    c = finish(c);
    c.passed = c.passed && label_mismatches == 0;
    return c;
}

OracleCheck check_auc(int instances, std::uint64_t seed) {
    OracleCheck c{"auc-pair-counting", instances, 0.0, 1e-9, false, ""};
    Rng rng(seed);
    for (int t = 0; t < instances; ++t) {
        const int n = std::uniform_int_distribution<int>(2, 64)(rng);
        std::vector<std::uint8_t> mask = bits(rng, n);
        mask[0] = 0;
        mask[1] = 1;
        std::vector<double> scores(n);
        // Coarse quantisation on alternate instances forces plenty of ties.
        const int levels = t % 2 ? 5 : 1000000;
        for (auto& s : scores) s = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
        const double expected = oracle::auc_pair_counting(scores, mask);
        const double got = *metrics::pixel_auc(std::span<const double>(scores), mask);
        c.max_error = std::max(c.max_error, std::abs(got - expected));
    }
    return finish(c);
}

OracleCheck check_srm(int instances, std::uint64_t seed) {
    OracleCheck c{"srm-correlation", instances, 0.0, 1e-6, false, ""};
    Rng rng(seed);
    std::uniform_real_distribution<double> px(0.0, 255.0);
    for (int t = 0; t < instances; ++t) {
        std::vector<double> img(3 * 16 * 16);
        for (auto& v : img) v = std::round(px(rng));
        const auto got = srm::srm_response<double>(img, 3, 16, 16);
        const auto expected = oracle::srm_direct(img, 16, 16);
        for (std::size_t i = 0; i < got.size(); ++i) c.max_error = std::max(c.max_error, std::abs(got[i] - expected[i]));
    }
    return finish(c);
}

OracleCheck check_pixel_reduction(int instances, std::uint64_t seed) {
    OracleCheck c{"pixel-patch-reduction", instances, 0.0, 1e-9, false, ""};
    Rng rng(seed);
    for (int t = 0; t < instances; ++t) {
        const int channels = std::uniform_int_distribution<int>(2, 16)(rng);
        const auto feat = gaussian(rng, static_cast<std::size_t>(channels) * 64);
        const auto mask = bits(rng, 64, std::uniform_real_distribution<double>(0.1, 0.9)(rng));
        const double expected = oracle::pixel_supcon_oracle(feat, channels, 8, 8, mask, 0.1);
        const double got =
            contrastive::patch_supcon<double>(feat, channels, 8, 8, mask, 8, 8, 8, 0.1, /*want_grad=*/false).loss;
        c.max_error = std::max(c.max_error, std::abs(got - expected));
    }
    return finish(c);
}

OracleCheck check_contrastive_gradient(int instances, std::uint64_t seed) {
    OracleCheck c{"contrastive-gradient", instances, 0.0, 1e-4, false, ""};
    Rng rng(seed);
    constexpr double kStep = 1e-5;
    for (int t = 0; t < instances; ++t) {
        const int channels = std::uniform_int_distribution<int>(2, 8)(rng);
        const int k = std::uniform_int_distribution<int>(2, 4)(rng);
        const int patch = std::uniform_int_distribution<int>(1, 3)(rng);
        const int h = k * patch, w = k * patch;
        const double tau = t % 2 ? 0.1 : 0.5;
        const auto feat = gaussian(rng, static_cast<std::size_t>(channels) * h * w);
        auto mask = bits(rng, static_cast<std::size_t>(h) * w);
        mask[0] = 0;
        mask.back() = 1;

        // Through pooling and normalisation, w.r.t. F.
        const auto analytic = contrastive::patch_supcon<double>(feat, channels, h, w, mask, h, w, k, tau, true);
        auto loss_of = [&](std::span<const double> f) {
            return contrastive::patch_supcon<double>(f, channels, h, w, mask, h, w, k, tau, false).loss;
        };
        std::uniform_int_distribution<std::size_t> pick(0, feat.size() - 1);
        for (int s = 0; s < 8; ++s) {
            const auto idx = pick(rng);
            const double numeric = oracle::central_difference(loss_of, feat, idx, kStep);
            c.max_error = std::max(c.max_error, oracle::relative_error(analytic.grad[idx], numeric));
        }

        // W.r.t. raw (pre-normalisation) vectors.
        const int n = std::uniform_int_distribution<int>(3, 24)(rng);
        const int d = std::uniform_int_distribution<int>(2, 8)(rng);
        const auto raw = gaussian(rng, static_cast<std::size_t>(n) * d);
        auto labels = bits(rng, n);
        labels[0] = 0;
        labels[1] = 1;
        auto raw_loss = [&](std::span<const double> r) {
            std::vector<double> u(r.begin(), r.end());
            normalize_rows(u, n, d);
            return contrastive::supcon_loss<double>(u, n, d, labels, tau).loss;
        };
        contrastive::PatchEmbeddings<double> rows;
        rows.count = n;
        rows.dim = d;
        rows.embeddings = raw;
        rows.norms.resize(n);
        rows.valid.assign(n, 1);
        for (int i = 0; i < n; ++i) {
            double sq = 0.0;
            for (int q = 0; q < d; ++q) sq += raw[i * d + q] * raw[i * d + q];
            rows.norms[i] = std::sqrt(sq);
        }
        normalize_rows(rows.embeddings, n, d);
        std::vector<double> grad_unit(static_cast<std::size_t>(n) * d);
        contrastive::supcon_loss_grad<double>(rows.embeddings, n, d, labels, tau, grad_unit);
        const auto grad_raw = contrastive::normalize_backward<double>(rows, grad_unit);
        std::uniform_int_distribution<std::size_t> pick_raw(0, raw.size() - 1);
        for (int s = 0; s < 8; ++s) {
            const auto idx = pick_raw(rng);
            const double numeric = oracle::central_difference(raw_loss, raw, idx, kStep);
            c.max_error = std::max(c.max_error, oracle::relative_error(grad_raw[idx], numeric));
        }
    }
    c = finish(c);
    c.passed = c.max_error < c.tolerance;
    return c;
}

OracleCheck check_parallel_consistency(int instances, std::uint64_t seed) {
    OracleCheck c{"serial-vs-parallel", instances, 0.0, 1e-9, false, ""};
    Rng rng(seed);
    for (int t = 0; t < instances; ++t) {
        const int n = std::uniform_int_distribution<int>(2, 48)(rng);
        const int d = std::uniform_int_distribution<int>(1, 16)(rng);
        auto emb = gaussian(rng, static_cast<std::size_t>(n) * d);
        normalize_rows(emb, n, d);
        const auto labels = bits(rng, n);
        std::vector<double> g1(emb.size()), g2(emb.size());
        const auto a = contrastive::supcon_loss_grad<double>(emb, n, d, labels, 0.1, g1);
        const auto b = contrastive::reference::supcon_loss_grad<double>(emb, n, d, labels, 0.1, g2);
        c.max_error = std::max(c.max_error, oracle::relative_error(a.loss, b.loss, 1e-12));
        for (std::size_t i = 0; i < g1.size(); ++i) c.max_error = std::max(c.max_error, std::abs(g1[i] - g2[i]));
        if (a.anchors_used != b.anchors_used) c.max_error = std::max(c.max_error, 1.0);

        std::vector<double> img(3 * 12 * 12);
        for (auto& v : img) v = std::uniform_int_distribution<int>(0, 255)(rng);
        const auto s1 = srm::apply_srm<double>(img, 3, 12, 12);
        const auto s2 = srm::reference::apply_srm<double>(img, 3, 12, 12);
        for (std::size_t i = 0; i < s1.size(); ++i) c.max_error = std::max(c.max_error, std::abs(s1[i] - s2[i]));

        const auto feat = gaussian(rng, static_cast<std::size_t>(d) * 8 * 8);
        const auto p1 = contrastive::partition_and_pool<double>(feat, d, 8, 8, 4);
        const auto p2 = contrastive::reference::partition_and_pool<double>(feat, d, 8, 8, 4);
        for (std::size_t i = 0; i < p1.embeddings.size(); ++i)
            c.max_error = std::max(c.max_error, std::abs(p1.embeddings[i] - p2.embeddings[i]));
        const auto mask = bits(rng, 64);
        if (contrastive::downsample_mask_majority(mask, 8, 8, 4) !=
            contrastive::reference::downsample_mask_majority(mask, 8, 8, 4))
            c.max_error = std::max(c.max_error, 1.0);
    }
    return finish(c);
}

std::vector<OracleCheck> run_all(const Options& options) {
    const auto s = options.seed;
    return {check_supcon_oracle(200, s + 1, options.tau_scale),
            check_pooling(100, s + 2),
            check_auc(500, s + 3),
            check_srm(50, s + 4),
            check_pixel_reduction(50, s + 5),
            check_contrastive_gradient(20, s + 6),
            check_parallel_consistency(20, s + 7)};
}

std::string format_report(const std::vector<OracleCheck>& checks) {
    std::string out;
    char buf[256];
    int failed = 0;
    for (const auto& c : checks) {
        std::snprintf(buf, sizeof buf, "%-4s %-22s instances=%-4d max_error=%.3e tolerance=%.1e%s%s\n",
                      c.passed ? "PASS" : "FAIL", c.name.c_str(), c.instances, c.max_error, c.tolerance,
                      c.detail.empty() ? "" : "  ", c.detail.c_str());
        out += buf;
        if (!c.passed) ++failed;
    }
    std::snprintf(buf, sizeof buf, "%zu suites, %d failed\n", checks.size(), failed);
    out += buf;
    return out;
}

} // namespace cflnet::selftest
