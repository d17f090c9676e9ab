#include "torch_doctest.hpp"

#include <cflnet/checkpoint.hpp>
#include <cflnet/errors.hpp>
#include <cflnet/losses.hpp>
#include <cflnet/model.hpp>
#include <cflnet/oracles.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace cflnet;

namespace {

ModelConfig tiny_config(int size = 32) {
    ModelConfig c;
    c.input_size = size;
    c.encoder = "mini";
    c.encoder_stages = 2;
    c.embed_dim = 8;
    c.aspp_channels = 16;
    c.aspp_rates = {1, 2};
    return c;
}

torch::Tensor random_image(int b, int size, std::uint64_t seed) {
    torch::manual_seed(seed);
    return torch::randint(0, 256, {b, 3, size, size}).to(torch::kFloat32);
}

torch::Tensor half_mask(int b, int size) {
    auto m = torch::zeros({b, size, size}, torch::kUInt8);
    m.index_put_({torch::indexing::Slice(), torch::indexing::Slice(size / 2)}, 1);
    return m;
}

} // namespace

TEST_CASE("forward shapes in training and evaluation") {
    torch::manual_seed(0);
    CflNet net(tiny_config());
    auto x = random_image(2, 32, 1);
    net->train();
    auto tr = net->forward(x, true);
    CHECK(tr.logits.sizes() == torch::IntArrayRef({2, 2, 32, 32}));
    REQUIRE(tr.projection.has_value());
    CHECK(tr.projection->sizes() == torch::IntArrayRef({2, 8, 32, 32}));
    net->eval();
    auto ev = net->forward(x, false);
    CHECK(ev.logits.sizes() == torch::IntArrayRef({2, 2, 32, 32}));
    CHECK_FALSE(ev.projection.has_value());
    auto single = net->forward(x[0], false);
    CHECK(single.logits.sizes() == torch::IntArrayRef({1, 2, 32, 32}));
    auto p = torch::softmax(ev.logits, 1).sum(1);
    CHECK(torch::allclose(p, torch::ones_like(p), 1e-6, 1e-6));
    CHECK_THROWS_AS(net->forward(random_image(1, 48, 1), false), InvalidInput);
}

TEST_CASE("head stride keeps logits at full resolution") {
    auto cfg = tiny_config();
    cfg.head_stride = 4;
    CflNet net(cfg);
    auto out = net->forward(random_image(1, 32, 3), true);
    CHECK(out.logits.sizes() == torch::IntArrayRef({1, 2, 32, 32}));
    CHECK(out.projection->sizes() == torch::IntArrayRef({1, 8, 8, 8}));
}

TEST_CASE("two-stream fusion concatenates channels") {
    CflNet net(tiny_config());
    auto a = torch::randn({1, 3, 32, 32}), b = torch::randn({1, 3, 32, 32});
    auto fused = net->encode_two_stream(a, b);
    const int c = net->rgb_encoder()->out_channels();
    CHECK(fused.size(1) == 2 * c);
    CHECK(fused.size(2) == 32 / net->rgb_encoder()->stride());
    CHECK_THROWS_AS(net->encode_two_stream(a, torch::randn({1, 3, 16, 16})), InvalidInput);

    // with identical stream weights, swapping inputs swaps channel halves
    net->eval();
    {
        torch::NoGradGuard ng;
        auto src = net->rgb_encoder()->named_parameters();
        for (auto& p : net->srm_encoder()->named_parameters()) p.value().copy_(src[p.key()]);
        auto sb = net->rgb_encoder()->named_buffers();
        for (auto& p : net->srm_encoder()->named_buffers()) p.value().copy_(sb[p.key()]);
    }
    auto ab = net->encode_two_stream(a, b), ba = net->encode_two_stream(b, a);
    CHECK(torch::equal(ab.slice(1, 0, c), ba.slice(1, c)));
    CHECK(torch::equal(ab.slice(1, c), ba.slice(1, 0, c)));
}

TEST_CASE("resnet50 deepest stage is 2048 channels at stride 32") {
    ResNetEncoder enc("resnet50", 4);
    CHECK(enc->out_channels() == 2048);
    CHECK(enc->stride() == 32);
    enc->eval();
    torch::NoGradGuard ng;
    auto y = enc->forward(torch::randn({1, 3, 64, 64}));
    CHECK(y.sizes() == torch::IntArrayRef({1, 2048, 2, 2}));
}

TEST_CASE("aspp preserves size and maps constants to constants") {
    Aspp aspp(12, 16, std::vector<int>{1, 6, 12});
    CHECK(aspp->branch_count() == 5);
    aspp->eval();
    torch::NoGradGuard ng;
    for (auto hw : std::vector<std::pair<int, int>>{{1, 1}, {3, 5}, {8, 8}}) {
        auto y = aspp->forward(torch::randn({1, 12, hw.first, hw.second}));
        CHECK(y.sizes() == torch::IntArrayRef({1, 16, hw.first, hw.second}));
    }
    auto c = torch::randn({1, 12, 1, 1}).expand({1, 12, 8, 8}).contiguous();
    auto y = aspp->forward(c);
    auto spread = (y.amax({2, 3}) - y.amin({2, 3})).abs().max().item<double>();
    CHECK(spread <= 1e-5);
}

TEST_CASE("projection head with zeroed last conv emits zeros") {
    CflNet net(tiny_config());
    {
        torch::NoGradGuard ng;
        auto last = net->projection()->ptr(net->projection()->size() - 1);
        for (auto& p : last->parameters()) p.zero_();
    }
    auto out = net->forward(random_image(1, 32, 4), true);
    CHECK(out.projection->abs().max().item<double>() == 0.0);
}

TEST_CASE("forward is bitwise deterministic") {
    at::globalContext().setDeterministicAlgorithms(true, false);
    CflNet net(tiny_config());
    auto x = random_image(2, 32, 5);
    net->eval();
    auto a = net->forward(x, false).logits;
    auto b = net->forward(x, false).logits;
    CHECK(torch::equal(a, b));
    net->train();
    auto c = net->forward(x, true);
    auto d = net->forward(x, true);
    CHECK(torch::equal(c.logits, d.logits));
    CHECK(torch::equal(*c.projection, *d.projection));
}

TEST_CASE("contrastive gradient reaches both encoder streams") {
    torch::manual_seed(2);
    CflNet net(tiny_config());
    net->train();
    auto out = net->forward(random_image(1, 32, 6), true);
    auto con = patch_contrastive_loss(*out.projection, half_mask(1, 32), 8, 0.1);
    con.backward();
    auto norm_of = [](ResNetEncoder enc) {
        double s = 0.0;
        for (auto& p : enc->parameters())
            if (p.grad().defined()) s += p.grad().abs().sum().item<double>();
        return s;
    };
    CHECK(norm_of(net->rgb_encoder()) > 0.0);
    CHECK(norm_of(net->srm_encoder()) > 0.0);
}

TEST_CASE("frozen rgb batch norm stays in eval mode") {
    auto cfg = tiny_config();
    cfg.freeze_rgb_bn = true;
    CflNet net(cfg);
    net->train();
    for (auto& m : net->rgb_encoder()->modules(false))
        if (auto* bn = m->as<torch::nn::BatchNorm2d>()) CHECK_FALSE(bn->is_training());
    for (auto& m : net->srm_encoder()->modules(false))
        if (auto* bn = m->as<torch::nn::BatchNorm2d>()) CHECK(bn->is_training());
}

TEST_CASE("total loss gradient matches finite differences on sampled weights") {
    torch::manual_seed(11);
    auto cfg = tiny_config();
    CflNet net(cfg);
    net->to(torch::kFloat64);
    net->train();
    auto x = random_image(1, 32, 7).to(torch::kFloat64);
    auto mask = torch::zeros({1, 32, 32}, torch::kUInt8);
    mask.index_put_({0, torch::indexing::Slice(8, 24), torch::indexing::Slice(4, 20)}, 1);
    LossConfig lc;
    lc.grid = 8;
    auto eval_loss = [&] { return combined_loss(net->forward(x, true), mask, lc); };

    net->zero_grad();
    eval_loss().total.backward();

    auto params = net->parameters();
    std::mt19937_64 rng(3);
    int checked = 0;
    double worst = 0.0;
    torch::NoGradGuard ng;
    while (checked < 20) {
        auto& p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
        if (!p.grad().defined()) continue;
        auto flat = p.view({-1});
        const auto i = std::uniform_int_distribution<int64_t>(0, flat.numel() - 1)(rng);
        const double w0 = flat[i].item<double>();
        const double h = 1e-5;
        flat[i] = w0 + h;
        const double up = eval_loss().total_value;
        flat[i] = w0 - h;
        const double down = eval_loss().total_value;
        flat[i] = w0;
        const double fd = (up - down) / (2 * h);
        const double an = p.grad().view({-1})[i].item<double>();
        worst = std::max(worst, oracle::relative_error(an, fd));
        ++checked;
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / ("cflnet_ckpt_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto path = (dir / "m.pt").string();
    CflNet net(tiny_config());
    net->train();
    net->forward(random_image(2, 32, 8), true);  // move running statistics
    net->eval();
    save_checkpoint(net, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded->config() == net->config());
    CHECK(read_checkpoint_config(path) == net->config());
    loaded->eval();
    auto x = random_image(1, 32, 9);
    CHECK(torch::equal(net->forward(x, false).logits, loaded->forward(x, false).logits));

    std::ofstream(dir / "junk.pt") << "junk";
    CHECK_THROWS_AS(load_checkpoint((dir / "junk.pt").string()), DataError);
    CHECK_THROWS_AS(load_checkpoint((dir / "absent.pt").string()), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("model config serializes and validates") {
    auto c = tiny_config();
    CHECK(ModelConfig::from_json(c.to_json()) == c);
    c.encoder = "vgg";
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = tiny_config();
    c.encoder_stages = 5;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
}
