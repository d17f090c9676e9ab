// cflnet: train, evaluate and apply the two-stream forgery localisation model.
//
// Exit codes: 0 success, 1 usage error, 2 runtime or data error.

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "cflnet/checkpoint.hpp"
#include "cflnet/config.hpp"
#include "cflnet/data.hpp"
#include "cflnet/errors.hpp"
#include "cflnet/evaluate.hpp"
#include "cflnet/selftest.hpp"
#include "cflnet/synth.hpp"
#include "cflnet/train.hpp"

#ifndef CFLNET_VERSION
#define CFLNET_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace cflnet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
};

TrainConfig resolve_config(const CommonArgs& args) {
    TrainConfig cfg;
    try {
        if (!args.config_path.empty()) cfg = load_config(args.config_path);
        for (const auto& o : args.overrides) apply_override(cfg, o);
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
}

void write_manifest(const std::string& output_dir, const std::string& command, const TrainConfig& cfg,
                    const nlohmann::ordered_json& inputs) {
    if (output_dir.empty()) return;
    fs::create_directories(output_dir);
    nlohmann::ordered_json j;
    j["format"] = "cflnet-run-manifest v1";
    j["command"] = command;
    j["code_version"] = CFLNET_VERSION;
    j["seed"] = cfg.seed;
    j["inputs"] = inputs;
    nlohmann::ordered_json c;
    for (const auto& [k, v] : cfg.entries()) c[k] = v;
    j["config"] = c;
    write_text(fs::path(output_dir) / "run_manifest.json", j.dump(2) + "\n");
}

std::pair<std::string, std::string> split_named(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("expected NAME=PATH, got '" + arg + "'");
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

std::vector<ForgerySample> load_nonempty(const std::string& root, const std::string& split) {
    auto data = load_dataset(root, split);
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
    if (data.missing_masks) std::cerr << "warning: " << data.missing_masks << " image(s) without masks skipped\n";
    if (data.samples.empty()) throw DataError("empty dataset: '" + root + "' (split " + split + ")");
    return std::move(data.samples);
}

void require_output(const CommonArgs& a) {
    if (a.output_dir.empty()) throw UsageError("--output is required");
}

int cmd_train(const CommonArgs& a, const std::string& dataset) {
    require_output(a);
    auto cfg = resolve_config(a);
    try {
        cfg.validate();
    } catch (const InvalidParameter& e) {
        throw UsageError(e.what());
    }
    write_manifest(a.output_dir, "train", cfg, {{"dataset", dataset}});
    auto train_set = load_nonempty(dataset, cfg.train_split);
    std::vector<ForgerySample> val_set;
    if (!cfg.val_split.empty() && fs::exists(fs::path(dataset) / (cfg.val_split + ".txt")))
        val_set = load_dataset(dataset, cfg.val_split).samples;
    configure_numerics(cfg);
    torch::manual_seed(cfg.seed);
    CflNet model(cfg.model_config());
    TrainOptions opts;
    opts.output_dir = a.output_dir;
    opts.on_record = [](const TrainLogRecord& r) {
        if (r.kind == "epoch") std::cout << format_log_record(r) << '\n';
    };
    const auto result = train(model, train_set, val_set, cfg, opts);
    std::cout << "trained " << result.steps << " steps; checkpoint " << result.final_checkpoint << '\n';
    return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoint, const std::string& dataset,
                 const std::string& split) {
    require_output(a);
    const auto cfg = resolve_config(a);
    write_manifest(a.output_dir, "evaluate", cfg, {{"checkpoint", checkpoint}, {"dataset", dataset}, {"split", split}});
    configure_numerics(cfg);
    auto model = load_checkpoint(checkpoint);
    const auto samples = load_nonempty(dataset, split);
    const auto report = evaluate_model(model, samples);
    write_text(fs::path(a.output_dir) / "eval_report.txt", metrics::format_report(report));
    std::cout << "mean_auc=" << report.mean_auc << " scored=" << report.per_image.size()
              << " skipped=" << report.skipped << '\n';
    return 0;
}

int cmd_cross_eval(const CommonArgs& a, const std::vector<std::string>& checkpoints,
                   const std::vector<std::string>& datasets, const std::string& split) {
    require_output(a);
    const auto cfg = resolve_config(a);
    std::vector<std::pair<std::string, std::string>> ckpts;
    for (const auto& c : checkpoints) ckpts.push_back(split_named(c));
    nlohmann::ordered_json inputs;
    for (const auto& [n, p] : ckpts) inputs["checkpoints"][n] = p;
    std::vector<std::pair<std::string, std::string>> dirs;
    for (const auto& d : datasets) dirs.push_back(split_named(d));
    for (const auto& [n, p] : dirs) inputs["datasets"][n] = p;
    inputs["split"] = split;
    write_manifest(a.output_dir, "cross-eval", cfg, inputs);
    configure_numerics(cfg);
    std::vector<NamedDataset> named;
    for (const auto& [n, p] : dirs) named.push_back({n, load_nonempty(p, split)});
    const auto grid = cross_dataset_eval(ckpts, named);
    const auto text = format_cross_eval(grid);
    write_text(fs::path(a.output_dir) / "cross_eval.tsv", text);
    std::cout << text;
    return 0;
}

int cmd_predict(const CommonArgs& a, const std::string& checkpoint, const std::vector<std::string>& images) {
    require_output(a);
    const auto cfg = resolve_config(a);
    nlohmann::ordered_json inputs{{"checkpoint", checkpoint}, {"images", images}};
    write_manifest(a.output_dir, "predict", cfg, inputs);
    configure_numerics(cfg);
    auto model = load_checkpoint(checkpoint);
    const int size = model->config().input_size;
    for (const auto& path : images) {
        ForgerySample s;
        s.id = fs::path(path).stem().string();
        s.image = read_rgb(path);
        s.mask = cv::Mat::zeros(s.image.size(), CV_8UC1);
        const auto in = preprocess(s, size);
        auto prob = predict_probability(model, in.image).to(torch::kFloat32).contiguous();
        cv::Mat p(size, size, CV_32FC1, prob.data_ptr<float>());
        cv::Mat full = p.clone();
        if (full.size() != s.image.size()) cv::resize(p, full, s.image.size(), 0, 0, cv::INTER_LINEAR);
        cv::Mat prob8(full.size(), CV_8UC1), mask8(full.size(), CV_8UC1);
        for (int y = 0; y < full.rows; ++y)
            for (int x = 0; x < full.cols; ++x) {
                const float v = std::clamp(full.at<float>(y, x), 0.0f, 1.0f);
                prob8.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(255.0f * v));
                mask8.at<std::uint8_t>(y, x) = v > 0.5f ? 255 : 0;
            }
        const auto prob_path = fs::path(a.output_dir) / (s.id + "_prob.png");
        const auto mask_path = fs::path(a.output_dir) / (s.id + "_mask.png");
        if (!cv::imwrite(prob_path.string(), prob8) || !cv::imwrite(mask_path.string(), mask8))
            throw DataError("cannot write predictions for '" + s.id + "'");
        std::cout << prob_path.string() << '\n' << mask_path.string() << '\n';
    }
    return 0;
}

int cmd_synth(const CommonArgs& a, int count, int size, const std::string& op) {
    require_output(a);
    const auto cfg = resolve_config(a);
    SynthOptions o;
    o.count = count;
    o.seed = cfg.seed;
    o.size = size;
    o.op = op;
    if (op != "mixed") parse_forgery_op(op);
    write_manifest(a.output_dir, "synth", cfg, {{"count", count}, {"size", size}, {"op", op}});
    const auto samples = synthesize(o);
    write_dataset(a.output_dir, samples);
    std::cout << "wrote " << samples.size() << " samples to " << a.output_dir << '\n';
    return 0;
}

int cmd_export_features(const CommonArgs& a, const std::string& checkpoint, const std::string& dataset,
                        const std::string& split) {
    require_output(a);
    const auto cfg = resolve_config(a);
    write_manifest(a.output_dir, "export-features", cfg,
                   {{"checkpoint", checkpoint}, {"dataset", dataset}, {"split", split}});
    configure_numerics(cfg);
    auto model = load_checkpoint(checkpoint);
    const auto samples = load_nonempty(dataset, split);
    const auto rows = export_mean_features(model, samples);
    write_text(fs::path(a.output_dir) / "features.csv", metrics::format_features(rows));
    const auto sep = metrics::feature_separation(rows);
    std::cout << rows.size() << " vectors; within-class cosine " << sep.within << ", between-class cosine "
              << sep.between << '\n';
    return 0;
}

int cmd_selftest(const CommonArgs& a, const std::string& fault) {
    selftest::Options o;
    if (a.seed) o.seed = *a.seed;
    if (fault == "tau") o.tau_scale = 1.05;
    else if (!fault.empty()) throw UsageError("unknown fault injection '" + fault + "'");
    const auto checks = selftest::run_all(o);
    const auto report = selftest::format_report(checks);
    std::cout << report;
    if (!a.output_dir.empty()) {
        write_manifest(a.output_dir, "selftest", resolve_config(a), {{"fault_inject", fault}});
        write_text(fs::path(a.output_dir) / "selftest_report.txt", report);
    }
    for (const auto& c : checks)
        if (!c.passed) return kExitRuntime;
    return 0;
}

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--override", args.overrides, "KEY=VALUE config override (repeatable)");
    sub->add_option("--output", args.output_dir, "Output directory");
    sub->add_option("--seed", args.seed, "Random seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cflnet: two-stream image forgery localisation with a patch contrastive objective"};
    app.set_version_flag("--version", std::string(CFLNET_VERSION));
    app.require_subcommand(1);

    CommonArgs args;
    std::string dataset, checkpoint, split = "all", op = "mixed", fault;
    std::vector<std::string> checkpoints, datasets, images;
    int count = 100, size = 256;

    auto* train_cmd = app.add_subcommand("train", "Train a model");
    add_common(train_cmd, args);
    train_cmd->add_option("--dataset", dataset, "Dataset root")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Per-image pixel AUC of a checkpoint");
    add_common(eval_cmd, args);
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--dataset", dataset)->required();
    eval_cmd->add_option("--split", split, "Split manifest name")->capture_default_str();

    auto* cross_cmd = app.add_subcommand("cross-eval", "Trained-on x evaluated-on AUC grid");
    add_common(cross_cmd, args);
    cross_cmd->add_option("--checkpoint", checkpoints, "NAME=PATH (repeatable)")->required();
    cross_cmd->add_option("--dataset", datasets, "NAME=DIR (repeatable)")->required();
    cross_cmd->add_option("--split", split)->capture_default_str();

    auto* predict_cmd = app.add_subcommand("predict", "Write probability and mask PNGs");
    add_common(predict_cmd, args);
    predict_cmd->add_option("--checkpoint", checkpoint)->required();
    predict_cmd->add_option("--image", images, "Input image (repeatable)")->required();

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic forgery dataset");
    add_common(synth_cmd, args);
    synth_cmd->add_option("--count", count)->capture_default_str()->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--size", size)->capture_default_str()->check(CLI::Range(8, 8192));
    synth_cmd->add_option("--op", op, "splice | copymove | removal | mixed")->capture_default_str();

    auto* export_cmd = app.add_subcommand("export-features", "Per-image class-mean head features");
    add_common(export_cmd, args);
    export_cmd->add_option("--checkpoint", checkpoint)->required();
    export_cmd->add_option("--dataset", dataset)->required();
    export_cmd->add_option("--split", split)->capture_default_str();

    auto* selftest_cmd = app.add_subcommand("selftest", "Run the oracle suites");
    add_common(selftest_cmd, args);
    selftest_cmd->add_option("--fault-inject", fault, "Test hook: 'tau' distorts the SupCon temperature")
        ->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(args, dataset);
        if (*eval_cmd) return cmd_evaluate(args, checkpoint, dataset, split);
        if (*cross_cmd) return cmd_cross_eval(args, checkpoints, datasets, split);
        if (*predict_cmd) return cmd_predict(args, checkpoint, images);
        if (*synth_cmd) return cmd_synth(args, count, size, op);
        if (*export_cmd) return cmd_export_features(args, checkpoint, dataset, split);
        if (*selftest_cmd) return cmd_selftest(args, fault);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidParameter& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
