#include "cflnet/synth.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "cflnet/errors.hpp"

namespace cflnet {

namespace {

constexpr int kMaxPlacementTries = 64;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

cv::Scalar random_colour(Rng& rng) { return {uniform(rng, 0, 255), uniform(rng, 0, 255), uniform(rng, 0, 255)}; }

// Star-shaped polygon rasterised into its own bounding box.
cv::Mat random_region(Rng& rng, int host_size) {
    const int radius = std::max(2, static_cast<int>(std::lround(uniform(rng, 0.10, 0.25) * host_size)));
    const int vertices = uniform_int(rng, 5, 9);
    std::vector<double> angles(vertices);
    for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    std::sort(angles.begin(), angles.end());
    std::vector<cv::Point> poly;
    for (double a : angles) {
        const double r = radius * uniform(rng, 0.55, 1.0);
        poly.emplace_back(static_cast<int>(std::lround(radius + r * std::cos(a))),
                          static_cast<int>(std::lround(radius + r * std::sin(a))));
    }
    cv::Mat region = cv::Mat::zeros(2 * radius + 1, 2 * radius + 1, CV_8UC1);
    cv::fillPoly(region, std::vector<std::vector<cv::Point>>{poly}, cv::Scalar(1));
    return region;
}

bool fits(const cv::Mat& region, const cv::Mat& image) {
    return region.rows <= image.rows && region.cols <= image.cols && cv::countNonZero(region) > 0;
}

cv::Point random_origin(Rng& rng, const cv::Mat& region, const cv::Mat& image) {
    return {uniform_int(rng, 0, image.cols - region.cols), uniform_int(rng, 0, image.rows - region.rows)};
}

bool overlaps(cv::Point a, cv::Point b, const cv::Mat& region) {
    return std::abs(a.x - b.x) < region.cols && std::abs(a.y - b.y) < region.rows;
}

// Copies `src` pixels under `region` (placed at `from`) onto `dst` at `to`, marking `mask`.
void paste(const cv::Mat& src, cv::Point from, cv::Mat& dst, cv::Point to, const cv::Mat& region, cv::Mat& mask) {
    for (int y = 0; y < region.rows; ++y)
        for (int x = 0; x < region.cols; ++x) {
            if (!region.at<std::uint8_t>(y, x)) continue;
            dst.at<cv::Vec3b>(to.y + y, to.x + x) = src.at<cv::Vec3b>(from.y + y, from.x + x);
            mask.at<std::uint8_t>(to.y + y, to.x + x) = 1;
        }
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

ForgeryOp parse_forgery_op(const std::string& name) {
    if (name == "splice") return ForgeryOp::splice;
    if (name == "copymove") return ForgeryOp::copymove;
    if (name == "removal") return ForgeryOp::removal;
    throw InvalidParameter("unknown forgery op '" + name + "' (expected splice, copymove or removal)");
}

std::string to_string(ForgeryOp op) {
    switch (op) {
    case ForgeryOp::splice: return "splice";
    case ForgeryOp::copymove: return "copymove";
    case ForgeryOp::removal: return "removal";
    }
    return "unknown";
}

cv::Mat procedural_scene(std::uint64_t seed, int size) {
    if (size < 8) throw InvalidParameter("procedural_scene: size must be at least 8");
    Rng rng(seed);
    cv::Mat img(size, size, CV_32FC3);
    const cv::Scalar c0 = random_colour(rng), c1 = random_colour(rng);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double fx = uniform(rng, 0.5, 3.0) * 2.0 * std::numbers::pi / size;
    const double fy = uniform(rng, 0.5, 3.0) * 2.0 * std::numbers::pi / size;
    const double amp = uniform(rng, 5.0, 25.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = std::clamp(0.5 + ((x - size / 2.0) * ca + (y - size / 2.0) * sa) / size, 0.0, 1.0);
            const double tex = amp * std::sin(fx * x) * std::cos(fy * y);
            auto& px = img.at<cv::Vec3f>(y, x);
            for (int c = 0; c < 3; ++c) px[c] = static_cast<float>((1.0 - t) * c0[c] + t * c1[c] + tex);
        }
    const int shapes = uniform_int(rng, 3, 8);
    for (int s = 0; s < shapes; ++s) {
        const cv::Point centre(uniform_int(rng, 0, size - 1), uniform_int(rng, 0, size - 1));
        const int extent = std::max(2, static_cast<int>(uniform(rng, 0.05, 0.3) * size));
        const cv::Scalar colour = random_colour(rng);
        switch (uniform_int(rng, 0, 2)) {
        case 0: cv::circle(img, centre, extent, colour, cv::FILLED); break;
        case 1:
            cv::rectangle(img, cv::Rect(centre.x - extent / 2, centre.y - extent / 3, extent, 2 * extent / 3 + 1),
                          colour, cv::FILLED);
            break;
        default:
            cv::ellipse(img, centre, cv::Size(extent, std::max(1, extent / 2)), uniform(rng, 0, 180), 0, 360, colour,
                        cv::FILLED);
        }
    }
    cv::GaussianBlur(img, img, cv::Size(5, 5), uniform(rng, 0.5, 1.5));
    const bool noisy = uniform(rng, 0.0, 1.0) < 0.5;
    const double sigma = noisy ? uniform(rng, 5.0, 9.0) : uniform(rng, 0.5, 2.0);
    std::normal_distribution<double> noise(0.0, sigma);
    cv::Mat out(size, size, CV_8UC3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const auto& px = img.at<cv::Vec3f>(y, x);
            auto& o = out.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) o[c] = cv::saturate_cast<std::uint8_t>(std::lround(px[c] + noise(rng)));
        }
    return out;
}

ForgerySample synth_forge(std::span<const cv::Mat> pool, std::uint64_t seed, ForgeryOp op) {
    const std::size_t needed = op == ForgeryOp::splice ? 2 : 1;
    if (pool.size() < needed)
        throw InvalidInput("synth_forge: " + to_string(op) + " needs at least " + std::to_string(needed) +
                           " images in the pool");
    Rng rng(seed);
    const std::size_t host_index = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const cv::Mat& host = pool[host_index];
    if (host.type() != CV_8UC3) throw InvalidInput("synth_forge: pool images must be 8-bit RGB");

    ForgerySample out;
    out.image = host.clone();
    out.mask = cv::Mat::zeros(host.size(), CV_8UC1);
    out.source_tag = "synth-" + to_string(op);
    out.id = "synth_" + std::to_string(seed);

    for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
        const cv::Mat region = random_region(rng, std::min(host.rows, host.cols));
        if (!fits(region, host)) continue;
        const cv::Point to = random_origin(rng, region, host);
        switch (op) {
        case ForgeryOp::splice: {
            std::size_t donor_index = std::uniform_int_distribution<std::size_t>(0, pool.size() - 2)(rng);
            if (donor_index >= host_index) ++donor_index;
            const cv::Mat& donor = pool[donor_index];
            if (donor.type() != CV_8UC3) throw InvalidInput("synth_forge: pool images must be 8-bit RGB");
            if (!fits(region, donor)) continue;
            paste(donor, random_origin(rng, region, donor), out.image, to, region, out.mask);
            return out;
        }
        case ForgeryOp::copymove: {
            const cv::Point from = random_origin(rng, region, host);
            if (overlaps(from, to, region)) continue;
            paste(host, from, out.image, to, region, out.mask);
            return out;
        }
        case ForgeryOp::removal: {
            std::array<cv::Point, 4> shifts = {cv::Point(region.cols, 0), cv::Point(-region.cols, 0),
                                               cv::Point(0, region.rows), cv::Point(0, -region.rows)};
            std::shuffle(shifts.begin(), shifts.end(), rng);
            for (const auto& d : shifts) {
                const cv::Point from = to + d;
                if (from.x < 0 || from.y < 0 || from.x + region.cols > host.cols || from.y + region.rows > host.rows)
                    continue;
                paste(host, from, out.image, to, region, out.mask);
                return out;
            }
            continue;
        }
        }
    }
    throw DataError("synth_forge: no " + to_string(op) + " region fits the host image after " +
                    std::to_string(kMaxPlacementTries) + " attempts");
}

std::vector<ForgerySample> synthesize(const SynthOptions& options) {
    if (options.count < 0) throw InvalidParameter("synthesize: count must be non-negative");
    const bool mixed = options.op == "mixed";
    const ForgeryOp fixed = mixed ? ForgeryOp::splice : parse_forgery_op(options.op);
    std::vector<ForgerySample> out;
    out.reserve(options.count);
    for (int i = 0; i < options.count; ++i) {
        const std::uint64_t s = derive_seed(options.seed, static_cast<std::uint64_t>(i));
        const std::array<cv::Mat, 2> pool = {procedural_scene(derive_seed(s, 0), options.size),
                                             procedural_scene(derive_seed(s, 1), options.size)};
        const ForgeryOp op = mixed ? static_cast<ForgeryOp>(i % 3) : fixed;
        auto sample = synth_forge(pool, derive_seed(s, 2), op);
        char id[32];
        std::snprintf(id, sizeof id, "sample_%04d", i);
        sample.id = id;
        out.push_back(std::move(sample));
    }
    return out;
}

void write_dataset(const std::string& root, std::span<const ForgerySample> samples) {
    for (const auto& s : samples) write_sample(root, s);
    const std::size_t n = samples.size();
    const std::size_t n_train = n * 8 / 10, n_val = n / 10;
    auto write_ids = [&](const std::string& name, std::size_t begin, std::size_t end) {
        std::ofstream out(root + "/" + name + ".txt");
        if (!out) throw DataError("cannot write manifest " + root + "/" + name + ".txt");
        for (std::size_t i = begin; i < end; ++i) out << samples[i].id << '\n';
    };
    write_ids("all", 0, n);
    write_ids("train", 0, n_train);
    write_ids("val", n_train, n_train + n_val);
    write_ids("test", n_train + n_val, n);
}

} // namespace cflnet
