#include <doctest.h>

#include <cflnet/errors.hpp>
#include <cflnet/oracles.hpp>
#include <cflnet/srm.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace cflnet;

namespace {

std::vector<double> random_image(std::mt19937_64& rng, int h, int w) {
    std::uniform_int_distribution<int> pix(0, 255);
    std::vector<double> img(3 * h * w);
    for (auto& v : img) v = pix(rng);
    return img;
}

double at(const std::vector<double>& m, int c, int y, int x, int h, int w) {
    return m[(static_cast<std::size_t>(c) * h + y) * w + x];
}

} // namespace

TEST_CASE("srm kernel bank is zero-sum with the expected scaling") {
    const auto& bank = srm::srm_kernels();
    for (int k = 0; k < srm::kNumKernels; ++k) {
        int isum = 0;
        for (int v : bank.weights[k]) isum += v;
        CHECK(isum == 0);
        double sum = 0.0;
        for (double v : bank.kernels[k]) sum += v;
        CHECK(std::abs(sum) <= 1e-15);
    }
    CHECK(bank.normalizers == std::array<double, 3>{4.0, 12.0, 2.0});
    CHECK(bank.kernels[1][12] == -1.0);
    CHECK(bank.kernels[0][12] == -1.0);
    CHECK(bank.kernels[2][12] == -1.0);
    CHECK(bank.kernels[2][11] == 0.5);
    CHECK(bank.kernels[0][0] == 0.0);
    CHECK(bank.kernels[1][0] == doctest::Approx(-1.0 / 12.0));
}

TEST_CASE("constant image gives an all-zero residual") {
    std::vector<double> img(3 * 20 * 17, 128.0);
    auto out = srm::apply_srm<double>(img, 3, 20, 17);
    REQUIRE(out.size() == img.size());
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("impulse response is the flipped kernel") {
    const int n = 16;
    std::vector<double> img(3 * n * n, 0.0);
    for (int c = 0; c < 3; ++c) img[(c * n + 8) * n + 8] = 1.0;
    auto out = srm::apply_srm<double>(img, 3, n, n);
    const auto& bank = srm::srm_kernels();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int dy = 8 - y, dx = 8 - x;
                double expect = 0.0;
                if (std::abs(dy) <= 2 && std::abs(dx) <= 2) expect = bank.kernels[c][(dy + 2) * 5 + (dx + 2)];
                CHECK(at(out, c, y, x, n, n) == doctest::Approx(expect).epsilon(1e-12));
            }
}

TEST_CASE("checkerboard saturates at the clamp bound") {
    const int n = 16;
    std::vector<double> img(3 * n * n);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) img[(c * n + y) * n + x] = ((x + y) % 2) ? 255.0 : 0.0;
    auto raw = srm::srm_response<double>(img, 3, n, n);
    auto out = srm::apply_srm<double>(img, 3, n, n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(std::abs(out[i]) <= 3.0);
        if (std::abs(raw[i]) > 3.0) CHECK(std::abs(out[i]) == 3.0);
    }
}

TEST_CASE("srm matches the direct correlation oracle") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        auto img = random_image(rng, 16, 16);
        auto raw = srm::srm_response<double>(img, 3, 16, 16);
        auto oracle = oracle::srm_direct(img, 16, 16);
        REQUIRE(raw.size() == oracle.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) worst = std::max(worst, std::abs(raw[i] - oracle[i]));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("srm is translation-equivariant away from borders") {
    std::mt19937_64 rng(5);
    const int n = 24, dy = 3, dx = 2;
    auto img = random_image(rng, n, n);
    std::vector<double> shifted(img.size(), 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int sy = y - dy, sx = x - dx;
                if (sy >= 0 && sx >= 0) shifted[(c * n + y) * n + x] = img[(c * n + sy) * n + sx];
            }
    auto a = srm::srm_response<double>(img, 3, n, n);
    auto b = srm::srm_response<double>(shifted, 3, n, n);
    for (int c = 0; c < 3; ++c)
        for (int y = dy + 2; y < n - 2; ++y)
            for (int x = dx + 2; x < n - 2; ++x)
                CHECK(at(b, c, y, x, n, n) == at(a, c, y - dy, x - dx, n, n));
}

TEST_CASE("response to the inverted image is the negation") {
    std::mt19937_64 rng(9);
    auto img = random_image(rng, 12, 15);
    std::vector<double> inv(img.size());
    std::transform(img.begin(), img.end(), inv.begin(), [](double v) { return 255.0 - v; });
    auto a = srm::srm_response<double>(img, 3, 12, 15);
    auto b = srm::srm_response<double>(inv, 3, 12, 15);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] + b[i] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("parallel and reference srm agree exactly") {
    std::mt19937_64 rng(3);
    std::vector<float> img(3 * 33 * 29);
    std::uniform_real_distribution<float> pix(0.0f, 255.0f);
    for (auto& v : img) v = pix(rng);
    auto a = srm::apply_srm<float>(img, 3, 33, 29);
    auto b = srm::reference::apply_srm<float>(img, 3, 33, 29);
    CHECK(a == b);
}

TEST_CASE("srm rejects bad shapes") {
    std::vector<double> img(2 * 8 * 8, 0.0);
    CHECK_THROWS_AS(srm::apply_srm<double>(img, 2, 8, 8), InvalidInput);
    std::vector<double> small(3 * 4 * 8, 0.0);
    CHECK_THROWS_AS(srm::apply_srm<double>(small, 3, 4, 8), InvalidInput);
}
