#include <doctest.h>

#include <cflnet/errors.hpp>
#include <cflnet/metrics.hpp>
#include <cflnet/oracles.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace cflnet;

TEST_CASE("pixel auc worked examples") {
    std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    std::vector<std::uint8_t> m = {0, 0, 1, 1};
    CHECK(*metrics::pixel_auc(s, m) == doctest::Approx(0.75).epsilon(1e-12));
    std::vector<double> perfect = {0.0, 0.1, 0.9, 1.0};
    CHECK(*metrics::pixel_auc(perfect, m) == 1.0);
    std::vector<double> flat(4, 0.3);
    CHECK(*metrics::pixel_auc(flat, m) == 0.5);
    std::vector<float> sf = {0.1f, 0.4f, 0.35f, 0.8f};
    CHECK(*metrics::pixel_auc(sf, m) == doctest::Approx(0.75));
}

TEST_CASE("single-class masks have no auc") {
    std::vector<double> s = {0.1, 0.4};
    CHECK_FALSE(metrics::pixel_auc(s, std::vector<std::uint8_t>{0, 0}).has_value());
    CHECK_FALSE(metrics::pixel_auc(s, std::vector<std::uint8_t>{1, 1}).has_value());
    CHECK_THROWS_AS(metrics::pixel_auc(s, std::vector<std::uint8_t>{0, 2}), InvalidInput);
}

TEST_CASE("auc matches pair counting, monotone transforms, and complements") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> nd(2, 64), levels(0, 6);
    std::bernoulli_distribution b(0.4);
    for (int t = 0; t < 100; ++t) {
        int n = nd(rng);
        std::vector<double> s(n);
        std::vector<std::uint8_t> m(n);
        for (int i = 0; i < n; ++i) {
            s[i] = levels(rng) / 6.0;  // coarse levels force ties
            m[i] = b(rng);
        }
        m[0] = 0;
        m[1] = 1;
        double auc = *metrics::pixel_auc(s, m);
        CHECK(std::abs(auc - oracle::auc_pair_counting(s, m)) <= 1e-9);
        CHECK(auc >= 0.0);
        CHECK(auc <= 1.0);
        std::vector<double> tr(n), inv(n);
        for (int i = 0; i < n; ++i) {
            tr[i] = std::exp(3.0 * s[i]) - 7.0;
            inv[i] = 1.0 - s[i];
        }
        CHECK(std::abs(*metrics::pixel_auc(tr, m) - auc) <= 1e-12);
        CHECK(std::abs(*metrics::pixel_auc(inv, m) - (1.0 - auc)) <= 1e-12);
    }
}

TEST_CASE("mean auc and report formatting") {
    std::vector<metrics::ImageAuc> per = {{"a", 0.9}, {"b", 0.7}};
    CHECK(metrics::mean_auc(per) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK_THROWS_AS(metrics::mean_auc(std::vector<metrics::ImageAuc>{}), DataError);
    metrics::EvalReport r;
    r.per_image = per;
    r.mean_auc = 0.8;
    r.skipped = 1;
    r.skipped_ids = {"c"};
    r.config_hash = "abc";
    auto text = metrics::format_report(r);
    CHECK(text.rfind("# cflnet-eval-report v1", 0) == 0);
    CHECK(text.find("a\t") != std::string::npos);
    CHECK(text.find("[summary]") != std::string::npos);
    CHECK(text == metrics::format_report(r));
}

TEST_CASE("feature separation and export") {
    std::vector<metrics::ClassMeanFeature> f = {
        {"x", 0, {1, 0}}, {"x", 1, {0, 1}}, {"y", 0, {1, 0}}, {"y", 1, {0, 1}}, {"z", 0, {1, 0}}};
    auto s = metrics::feature_separation(f);
    CHECK(s.within == doctest::Approx(1.0));
    CHECK(s.between == doctest::Approx(0.0));
    CHECK(s.gap() == doctest::Approx(1.0));
    auto text = metrics::format_features(f);
    CHECK(text.rfind("# cflnet-features v1", 0) == 0);
    int rows = 0;
    for (char ch : text) rows += ch == '\n';
    CHECK(rows == 6);
}
