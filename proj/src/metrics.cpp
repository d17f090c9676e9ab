#include "cflnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cflnet/errors.hpp"

namespace cflnet::metrics {

namespace {

template <class T>
std::optional<double> rank_auc(std::span<const T> scores, std::span<const std::uint8_t> mask) {
    if (scores.size() != mask.size()) throw InvalidInput("pixel_auc: scores and mask differ in size");
    std::size_t positives = 0;
    for (auto m : mask) {
        if (m > 1) throw InvalidInput("pixel_auc: mask must be binary");
        positives += m;
    }
    const std::size_t n = mask.size();
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (1-based, tie-averaged) ranks of the tampered pixels.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t tied_pos = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            tied_pos += mask[order[j]];
            ++j;
        }
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        rank_sum += avg_rank * static_cast<double>(tied_pos);
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

} // namespace

std::optional<double> pixel_auc(std::span<const float> scores, std::span<const std::uint8_t> mask) {
    return rank_auc(scores, mask);
}

std::optional<double> pixel_auc(std::span<const double> scores, std::span<const std::uint8_t> mask) {
    return rank_auc(scores, mask);
}

double mean_auc(std::span<const ImageAuc> per_image) {
    if (per_image.empty()) throw DataError("no image had both classes; mean AUC undefined");
    double sum = 0.0;
    for (const auto& r : per_image) sum += r.auc;
    return sum / static_cast<double>(per_image.size());
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    char buf[64];
    os << "# cflnet-eval-report v1\n";
    os << "# aggregation: mean of per-image pixel AUC; single-class images skipped\n";
    os << "id\tauc\n";
    for (const auto& r : report.per_image) {
        std::snprintf(buf, sizeof buf, "%.9f", r.auc);
        os << r.id << '\t' << buf << '\n';
    }
    for (const auto& id : report.skipped_ids) os << id << "\tskipped\n";
    os << "[summary]\n";
    os << "images_scored=" << report.per_image.size() << '\n';
    os << "skipped=" << report.skipped << '\n';
    std::snprintf(buf, sizeof buf, "%.9f", report.mean_auc);
    os << "mean_auc=" << buf << '\n';
    os << "config_hash=" << report.config_hash << '\n';
    return os.str();
}

SeparationStats feature_separation(std::span<const ClassMeanFeature> features) {
    double within = 0.0, between = 0.0;
    long n_within = 0, n_between = 0;
    for (std::size_t a = 0; a < features.size(); ++a)
        for (std::size_t b = a + 1; b < features.size(); ++b) {
            const double c = cosine(features[a].values, features[b].values);
            if (features[a].label == features[b].label) {
                if (features[a].id == features[b].id) continue;
                within += c;
                ++n_within;
            } else {
                between += c;
                ++n_between;
            }
        }
    SeparationStats s;
    s.within = n_within ? within / n_within : 0.0;
    s.between = n_between ? between / n_between : 0.0;
    return s;
}

std::string format_features(std::span<const ClassMeanFeature> features) {
    std::ostringstream os;
    os << "# cflnet-features v1\n";
    char buf[48];
    for (const auto& f : features) {
        os << f.id << ',' << f.label;
        for (double v : f.values) {
            std::snprintf(buf, sizeof buf, ",%.8g", v);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

} // namespace cflnet::metrics
