#include "torch_doctest.hpp"

#include <cflnet/config.hpp>
#include <cflnet/errors.hpp>

#include <cmath>

using namespace cflnet;

TEST_CASE("defaults follow the published schedule") {
    TrainConfig cfg;
    CHECK(cfg.lr == 1e-4);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.epochs == 100);
    CHECK(cfg.image_size == 256);
    CHECK(cfg.k == 64);
    CHECK(cfg.tau == 0.1);
    CHECK(cfg.ce_weight_tampered == 10.0);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("learning rate decays by 20 percent every 20 epochs") {
    TrainConfig cfg;
    CHECK(learning_rate(cfg, 0) == 1e-4);
    CHECK(learning_rate(cfg, 19) == 1e-4);
    CHECK(learning_rate(cfg, 20) == doctest::Approx(8e-5).epsilon(1e-12));
    CHECK(learning_rate(cfg, 21) == doctest::Approx(8e-5).epsilon(1e-12));
    CHECK(learning_rate(cfg, 41) == doctest::Approx(6.4e-5).epsilon(1e-12));
    for (int e = 0; e < 100; ++e)
        CHECK(learning_rate(cfg, e) == doctest::Approx(1e-4 * std::pow(0.8, e / 20)).epsilon(1e-12));
}

TEST_CASE("config text parses and round-trips") {
    auto cfg = parse_config("# toy run\nlr = 2e-4\nepochs=3  # short\n\naspp_rates = 2,4,6\ncontrastive = false\n");
    CHECK(cfg.lr == 2e-4);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.aspp_rates == std::vector<int>({2, 4, 6}));
    CHECK_FALSE(cfg.contrastive);
    auto again = parse_config(cfg.to_text());
    CHECK(again.entries() == cfg.entries());
    CHECK(cfg.entries().size() == config_keys().size());
}

TEST_CASE("unknown keys and bad values are errors") {
    CHECK_THROWS_AS(parse_config("learning_rate = 1\n"), InvalidParameter);
    CHECK_THROWS_AS(parse_config("epochs\n"), InvalidParameter);
    TrainConfig cfg;
    CHECK_THROWS_AS(apply_override(cfg, "nonsense=1"), InvalidParameter);
    CHECK_THROWS_AS(apply_override(cfg, "epochs"), InvalidParameter);
    CHECK_THROWS_AS(apply_override(cfg, "epochs=abc"), InvalidParameter);
    apply_override(cfg, "epochs=1");
    CHECK(cfg.epochs == 1);
    cfg.k = 48;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
    cfg.k = 64;
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameter);
}

TEST_CASE("train config maps onto model and loss settings") {
    auto cfg = parse_config("encoder = mini\nembed_dim = 16\nk = 8\ntau = 0.2\ncon_batch_reduction = sum\n");
    auto m = cfg.model_config();
    CHECK(m.encoder == "mini");
    CHECK(m.embed_dim == 16);
    auto l = cfg.loss_config();
    CHECK(l.grid == 8);
    CHECK(l.temperature == 0.2);
    CHECK(l.sum_over_batch);
    CHECK((l.ce_weights == std::array<double, 2>{1.0, 10.0}));
}
