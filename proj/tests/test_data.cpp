#include "torch_doctest.hpp"

#include <cflnet/data.hpp>
#include <cflnet/errors.hpp>
#include <cflnet/synth.hpp>

#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

using namespace cflnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cflnet_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

bool same_pixels(const cv::Mat& a, const cv::Mat& b) {
    return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0.0;
}

// Finds an offset d with image(p) == source(p + d) for every masked p.
std::optional<cv::Point> matching_offset(const cv::Mat& image, const cv::Mat& mask, const cv::Mat& source,
                                         bool allow_zero) {
    std::vector<cv::Point> pts;
    cv::findNonZero(mask, pts);
    for (int dy = -image.rows + 1; dy < image.rows; ++dy)
        for (int dx = -image.cols + 1; dx < image.cols; ++dx) {
            if (!allow_zero && dx == 0 && dy == 0) continue;
            bool ok = true;
            for (const auto& p : pts) {
                const int y = p.y + dy, x = p.x + dx;
                if (y < 0 || x < 0 || y >= source.rows || x >= source.cols ||
                    image.at<cv::Vec3b>(p) != source.at<cv::Vec3b>(y, x)) {
                    ok = false;
                    break;
                }
            }
            if (ok) return cv::Point(dx, dy);
        }
    return std::nullopt;
}

cv::Mat changed_pixels(const cv::Mat& a, const cv::Mat& b) {
    cv::Mat out = cv::Mat::zeros(a.size(), CV_8UC1);
    for (int y = 0; y < a.rows; ++y)
        for (int x = 0; x < a.cols; ++x)
            if (a.at<cv::Vec3b>(y, x) != b.at<cv::Vec3b>(y, x)) out.at<std::uint8_t>(y, x) = 255;
    return out;
}

} // namespace

TEST_CASE("load_dataset counts matched pairs and binarizes masks") {
    TempDir dir("load");
    auto samples = synthesize({.count = 10, .seed = 3, .size = 32, .op = "mixed"});
    write_dataset(dir.str(), samples);
    auto all = load_dataset(dir.str(), "all");
    CHECK(all.samples.size() == 10);
    CHECK(all.missing_masks == 0);
    CHECK(load_dataset(dir.str(), "train").samples.size() == 8);
    for (std::size_t i = 0; i < all.samples.size(); ++i) {
        CHECK(all.samples[i].id == samples[i].id);
        CHECK(same_pixels(all.samples[i].image, samples[i].image));
        CHECK(same_pixels(all.samples[i].mask, samples[i].mask));
    }

    cv::Mat m = cv::Mat::zeros(32, 32, CV_8UC1);
    m.at<std::uint8_t>(5, 5) = 200;
    m.at<std::uint8_t>(6, 6) = 127;
    cv::imwrite((dir.path / "masks" / "sample_0000.png").string(), m);
    auto reread = load_dataset(dir.str(), "all");
    CHECK(reread.samples[0].mask.at<std::uint8_t>(5, 5) == 1);
    CHECK(reread.samples[0].mask.at<std::uint8_t>(6, 6) == 0);
    CHECK(cv::countNonZero(reread.samples[0].mask) == 1);

    fs::remove(dir.path / "masks" / "sample_0003.png");
    auto missing = load_dataset(dir.str(), "all");
    CHECK(missing.samples.size() == 9);
    CHECK(missing.missing_masks == 1);
    CHECK(missing.warnings.size() == 1);

    std::ofstream(dir.path / "images" / "sample_0004.png") << "not a png";
    CHECK_THROWS_AS(load_dataset(dir.str(), "all"), DataError);
    CHECK_THROWS_AS(load_dataset(dir.str(), "nosuchsplit"), DataError);
}

TEST_CASE("an empty directory loads as an empty dataset") {
    TempDir dir("empty");
    CHECK(load_dataset(dir.str(), "all").samples.empty());
    CHECK_THROWS_AS(load_dataset((dir.path / "absent").string(), "all"), DataError);
}

TEST_CASE("binarize_mask thresholds above 127") {
    cv::Mat g = (cv::Mat_<std::uint8_t>(1, 5) << 0, 127, 128, 200, 255);
    cv::Mat b = binarize_mask(g);
    CHECK(b.at<std::uint8_t>(0) == 0);
    CHECK(b.at<std::uint8_t>(1) == 0);
    CHECK(b.at<std::uint8_t>(2) == 1);
    CHECK(b.at<std::uint8_t>(3) == 1);
    CHECK(b.at<std::uint8_t>(4) == 1);
}

TEST_CASE("preprocess resizes to the model size") {
    ForgerySample s;
    s.id = "wide";
    s.image = cv::Mat(384, 512, CV_8UC3, cv::Scalar(10, 20, 30));
    s.mask = cv::Mat::zeros(384, 512, CV_8UC1);
    s.mask(cv::Rect(100, 50, 200, 100)).setTo(1);
    auto in = preprocess(s, 256);
    CHECK(in.image.sizes() == torch::IntArrayRef({3, 256, 256}));
    CHECK(in.mask.sizes() == torch::IntArrayRef({256, 256}));
    CHECK(in.mask.max().item<int>() == 1);
    CHECK(((in.mask == 0) | (in.mask == 1)).all().item<bool>());
    CHECK(in.image[0].mean().item<double>() == doctest::Approx(10.0));
    CHECK(in.image[2].mean().item<double>() == doctest::Approx(30.0));

    auto synth = synthesize({.count = 1, .seed = 1, .size = 64, .op = "splice"})[0];
    auto same = preprocess(synth, 64);
    auto expect = torch::from_blob(synth.mask.data, {64, 64}, torch::kUInt8);
    CHECK(torch::equal(same.mask, expect));
}

TEST_CASE("synth_forge is deterministic") {
    std::vector<cv::Mat> pool = {procedural_scene(1, 64), procedural_scene(2, 64)};
    for (auto op : {ForgeryOp::splice, ForgeryOp::copymove, ForgeryOp::removal}) {
        auto a = synth_forge(pool, 77, op);
        auto b = synth_forge(pool, 77, op);
        CHECK(same_pixels(a.image, b.image));
        CHECK(same_pixels(a.mask, b.mask));
        CHECK(a.id == b.id);
    }
    CHECK(same_pixels(procedural_scene(9, 48), procedural_scene(9, 48)));
    CHECK_THROWS_AS(synth_forge(std::span<const cv::Mat>(pool.data(), 1), 1, ForgeryOp::splice), InvalidInput);
    CHECK_THROWS_AS(parse_forgery_op("blur"), InvalidParameter);
    CHECK(parse_forgery_op("copymove") == ForgeryOp::copymove);
}

TEST_CASE("mask marks exactly the pasted pixels") {
    std::vector<cv::Mat> one = {procedural_scene(5, 48)};
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto cm = synth_forge(one, seed, ForgeryOp::copymove);
        const cv::Mat keep = cm.mask == 0;
        CHECK(cv::countNonZero(cm.mask) > 0);
        // untouched outside the mask, copied from elsewhere in the same image inside it
        CHECK(cv::countNonZero(changed_pixels(cm.image, one[0]) & keep) == 0);
        CHECK(matching_offset(cm.image, cm.mask, one[0], false).has_value());

        auto rm = synth_forge(one, seed, ForgeryOp::removal);
        auto off = matching_offset(rm.image, rm.mask, one[0], false);
        CHECK(off.has_value());
    }
    std::vector<cv::Mat> two = {procedural_scene(11, 48), procedural_scene(12, 48)};
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto sp = synth_forge(two, seed, ForgeryOp::splice);
        const cv::Mat keep = sp.mask == 0;
        int host = -1;
        for (int h = 0; h < 2; ++h) {
            if (cv::countNonZero(changed_pixels(sp.image, two[h]) & keep) == 0) host = h;
        }
        REQUIRE(host >= 0);
        CHECK(matching_offset(sp.image, sp.mask, two[1 - host], true).has_value());
    }
}

TEST_CASE("synth_forge invariants over 1000 generations") {
    std::vector<std::vector<cv::Mat>> pools;
    for (int p = 0; p < 5; ++p) pools.push_back({procedural_scene(100 + p, 32 + 8 * p), procedural_scene(200 + p, 32 + 8 * p)});
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto& pool = pools[seed % pools.size()];
        auto s = synth_forge(pool, seed * 7919 + 1, static_cast<ForgeryOp>(seed % 3));
        bool ok = s.image.type() == CV_8UC3 && s.mask.type() == CV_8UC1 && s.image.size() == s.mask.size();
        double lo = 0.0, hi = 0.0;
        cv::minMaxLoc(s.mask, &lo, &hi);
        ok = ok && lo == 0.0 && hi == 1.0 && !s.id.empty() && !s.source_tag.empty();
        failures += !ok;
    }
    CHECK(failures == 0);
}

TEST_CASE("synthesize is reproducible and cycles operations") {
    auto a = synthesize({.count = 6, .seed = 7, .size = 32, .op = "mixed"});
    auto b = synthesize({.count = 6, .seed = 7, .size = 32, .op = "mixed"});
    REQUIRE(a.size() == 6);
    for (int i = 0; i < 6; ++i) {
        CHECK(same_pixels(a[i].image, b[i].image));
        CHECK(same_pixels(a[i].mask, b[i].mask));
    }
    CHECK(a[0].source_tag == "synth-splice");
    CHECK(a[1].source_tag == "synth-copymove");
    CHECK(a[2].source_tag == "synth-removal");
    CHECK(a[0].id == "sample_0000");
    auto c = synthesize({.count = 1, .seed = 8, .size = 32, .op = "mixed"});
    CHECK_FALSE(same_pixels(a[0].image, c[0].image));
}
