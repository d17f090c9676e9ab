#include "torch_doctest.hpp"

#include <cflnet/checkpoint.hpp>
#include <cflnet/config.hpp>
#include <cflnet/errors.hpp>
#include <cflnet/evaluate.hpp>
#include <cflnet/synth.hpp>
#include <cflnet/train.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cflnet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config() {
    return parse_config(
        "image_size = 32\nk = 8\nencoder = mini\nencoder_stages = 2\nembed_dim = 8\naspp_channels = 16\n"
        "aspp_rates = 1,2\nbatch_size = 2\nepochs = 2\nseed = 5\nthreads = 1\n");
}

std::vector<ForgerySample> tiny_data(int n, std::uint64_t seed = 1) {
    return synthesize({.count = n, .seed = seed, .size = 32, .op = "mixed"});
}

ForgerySample authentic_sample() {
    ForgerySample s;
    s.id = "clean";
    s.image = procedural_scene(3, 32);
    s.mask = cv::Mat::zeros(32, 32, CV_8UC1);
    return s;
}

std::string run_log(const TrainConfig& cfg, std::span<const ForgerySample> data) {
    configure_numerics(cfg);
    torch::manual_seed(cfg.seed);
    CflNet net(cfg.model_config());
    std::string text;
    TrainOptions opts;
    opts.on_record = [&](const TrainLogRecord& r) { text += format_log_record(r) + "\n"; };
    train(net, data, {}, cfg, opts);
    return text;
}

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("cflnet_pipe_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("training logs are reproducible") {
    auto data = tiny_data(4);
    auto cfg = tiny_train_config();
    auto a = run_log(cfg, data);
    auto b = run_log(cfg, data);
    CHECK_FALSE(a.empty());
    CHECK(a == b);
    cfg.seed = 6;
    CHECK(run_log(cfg, data) != a);
}

TEST_CASE("training log records steps and epochs") {
    auto data = tiny_data(5);
    auto cfg = tiny_train_config();
    cfg.epochs = 1;
    configure_numerics(cfg);
    CflNet net(cfg.model_config());
    const auto dir = temp_dir("log");
    TrainOptions opts;
    opts.output_dir = dir.string();
    auto res = train(net, data, {}, cfg, opts);
    int epochs = 0, steps = 0;
    for (const auto& r : res.log) {
        epochs += r.kind == "epoch";
        steps += r.kind == "step";
        CHECK(r.lr == cfg.lr);
        CHECK(r.total == doctest::Approx(r.l_ce + r.l_con).epsilon(1e-12));
    }
    CHECK(epochs == 1);
    CHECK(steps == 3);
    CHECK(res.steps == 3);
    CHECK(fs::exists(dir / "train_log.jsonl"));
    CHECK(fs::exists(dir / "model_final.pt"));
    CHECK(fs::exists(dir / "model_best.pt"));
    std::ifstream in(dir / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find("\"l_con\"") != std::string::npos);
    }
    CHECK(lines == 4);
    fs::remove_all(dir);
}

TEST_CASE("max_steps caps training and validation picks a best checkpoint") {
    auto data = tiny_data(6);
    auto cfg = tiny_train_config();
    cfg.max_steps = 2;
    cfg.epochs = 10;
    CflNet net(cfg.model_config());
    auto res = train(net, std::span(data).first(4), std::span(data).subspan(4), cfg);
    CHECK(res.steps == 2);
    CHECK(res.best_val_auc.has_value());
}

TEST_CASE("non-finite loss aborts with the batch ids") {
    auto data = tiny_data(2);
    auto cfg = tiny_train_config();
    cfg.ce_weight_tampered = 3e38;
    cfg.ce_weight_untampered = 3e38;
    CflNet net(cfg.model_config());
    try {
        train(net, data, {}, cfg);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite") != std::string::npos);
        CHECK(msg.find("sample_000") != std::string::npos);
    }
}

TEST_CASE("evaluation skips single-class images") {
    auto cfg = tiny_train_config();
    CflNet net(cfg.model_config());
    auto data = tiny_data(3);
    data.push_back(authentic_sample());
    auto report = evaluate_model(net, data);
    CHECK(report.skipped == 1);
    CHECK(report.skipped_ids == std::vector<std::string>{"clean"});
    REQUIRE(report.per_image.size() == 3);
    double sum = 0.0;
    for (const auto& r : report.per_image) {
        CHECK(r.auc >= 0.0);
        CHECK(r.auc <= 1.0);
        sum += r.auc;
    }
    CHECK(report.mean_auc == doctest::Approx(sum / 3.0).epsilon(1e-14));
    CHECK_FALSE(report.config_hash.empty());
    CHECK_THROWS_AS(evaluate_model(net, std::vector<ForgerySample>{}), DataError);
    CHECK_THROWS_AS(evaluate_model(net, std::vector<ForgerySample>{authentic_sample()}), DataError);

    auto prob = predict_probability(net, preprocess(data[0], 32).image);
    CHECK(prob.sizes() == torch::IntArrayRef({32, 32}));
    CHECK(prob.min().item<double>() >= 0.0);
    CHECK(prob.max().item<double>() <= 1.0);
}

TEST_CASE("cross-dataset grid") {
    const auto dir = temp_dir("cross");
    auto cfg = tiny_train_config();
    torch::manual_seed(1);
    CflNet a(cfg.model_config());
    torch::manual_seed(2);
    CflNet b(cfg.model_config());
    save_checkpoint(a, (dir / "a.pt").string());
    save_checkpoint(b, (dir / "b.pt").string());
    std::vector<NamedDataset> sets = {{"d0", tiny_data(2, 10)}, {"d1", tiny_data(2, 11)}, {"d2", tiny_data(2, 12)}};
    auto grid = cross_dataset_eval({{"A", (dir / "a.pt").string()}, {"B", (dir / "b.pt").string()}}, sets);
    REQUIRE(grid.mean_auc.size() == 2);
    int cells = 0;
    for (const auto& row : grid.mean_auc) cells += static_cast<int>(row.size());
    CHECK(cells == 6);
    CHECK(grid.mean_auc[0][0] == evaluate_model(a, sets[0].samples).mean_auc);
    CHECK(grid.mean_auc[1][1] == evaluate_model(b, sets[1].samples).mean_auc);
    auto text = format_cross_eval(grid);
    CHECK(text.rfind("# cflnet-cross-eval v1", 0) == 0);

    auto other = cfg;
    other.image_size = 64;
    CflNet c(other.model_config());
    save_checkpoint(c, (dir / "c.pt").string());
    try {
        cross_dataset_eval({{"A", (dir / "a.pt").string()}, {"C", (dir / "c.pt").string()}}, sets);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("'C'") != std::string::npos);
        CHECK(msg.find("'A'") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("mean feature export") {
    auto cfg = tiny_train_config();
    CflNet net(cfg.model_config());
    auto data = tiny_data(3);
    auto mixed = export_mean_features(net, data);
    CHECK(mixed.size() == 6);
    for (const auto& f : mixed) {
        CHECK(f.values.size() == 16);
        for (double v : f.values) CHECK(std::isfinite(v));
    }
    std::vector<ForgerySample> clean = {authentic_sample()};
    auto one = export_mean_features(net, clean);
    REQUIRE(one.size() == 1);
    CHECK(one[0].label == 0);
}
