#include "cflnet/evaluate.hpp"

#include <torch/torch.h>

#include <cstdio>

#include "cflnet/checkpoint.hpp"
#include "cflnet/errors.hpp"

namespace cflnet {

namespace {

// Puts the model in evaluation mode for the lifetime of the guard.
class EvalModeGuard {
public:
    explicit EvalModeGuard(CflNet& model) : model_(model), was_training_(model->is_training()) { model_->eval(); }
    ~EvalModeGuard() {
        if (was_training_) model_->train();
    }

private:
    CflNet& model_;
    bool was_training_;
};

} // namespace

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

torch::Tensor predict_probability(CflNet& model, const torch::Tensor& image) {
    EvalModeGuard guard(model);
    torch::NoGradGuard no_grad;
    const auto dtype = model->parameters().front().scalar_type();
    const auto out = model->forward(image.to(dtype), /*training=*/false);
    return torch::softmax(out.logits, 1).select(1, 1).squeeze(0);
}

metrics::EvalReport evaluate_model(CflNet& model, std::span<const ForgerySample> dataset) {
    if (dataset.empty()) throw DataError("empty dataset");
    metrics::EvalReport report;
    std::string ids;
    const int size = model->config().input_size;
    for (const auto& sample : dataset) {
        ids += sample.id + ";";
        const auto in = preprocess(sample, size);
        const auto prob = predict_probability(model, in.image).to(torch::kDouble).contiguous();
        const auto mask = in.mask.contiguous();
        const auto auc = metrics::pixel_auc(
            std::span<const double>(prob.data_ptr<double>(), static_cast<std::size_t>(prob.numel())),
            std::span<const std::uint8_t>(mask.data_ptr<std::uint8_t>(), static_cast<std::size_t>(mask.numel())));
        if (auc) {
            report.per_image.push_back({sample.id, *auc});
        } else {
            ++report.skipped;
            report.skipped_ids.push_back(sample.id);
        }
    }
    report.mean_auc = metrics::mean_auc(report.per_image);
    report.config_hash = fnv1a_hex(model->config().to_json() + "|per-image-auc|" + ids);
    return report;
}

CrossEvalGrid cross_dataset_eval(const std::vector<std::pair<std::string, std::string>>& checkpoints,
                                 std::span<const NamedDataset> datasets) {
    if (checkpoints.empty() || datasets.empty()) throw DataError("cross-eval needs at least one checkpoint and dataset");
    std::vector<ModelConfig> configs;
    for (const auto& [name, path] : checkpoints) {
        configs.push_back(read_checkpoint_config(path));
        if (configs.back().input_size != configs.front().input_size)
            throw DataError("checkpoint '" + name + "' has input_size " + std::to_string(configs.back().input_size) +
                            " but '" + checkpoints.front().first + "' has input_size " +
                            std::to_string(configs.front().input_size));
    }
    CrossEvalGrid grid;
    for (const auto& d : datasets) grid.evaluated_on.push_back(d.name);
    for (const auto& [name, path] : checkpoints) {
        auto model = load_checkpoint(path);
        grid.trained_on.push_back(name);
        std::vector<double> row;
        for (const auto& d : datasets) row.push_back(evaluate_model(model, d.samples).mean_auc);
        grid.mean_auc.push_back(std::move(row));
    }
    return grid;
}

std::string format_cross_eval(const CrossEvalGrid& grid) {
    std::string out = "# cflnet-cross-eval v1\n# rows: trained on; columns: evaluated on; cells: mean per-image pixel AUC\n";
    out += "trained_on";
    for (const auto& e : grid.evaluated_on) out += "\t" + e;
    out += "\n";
    char buf[32];
    for (std::size_t r = 0; r < grid.trained_on.size(); ++r) {
        out += grid.trained_on[r];
        for (double v : grid.mean_auc[r]) {
            std::snprintf(buf, sizeof buf, "\t%.6f", v);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::vector<metrics::ClassMeanFeature> export_mean_features(CflNet& model, std::span<const ForgerySample> dataset) {
    EvalModeGuard guard(model);
    torch::NoGradGuard no_grad;
    std::vector<metrics::ClassMeanFeature> rows;
    const int size = model->config().input_size;
    const auto dtype = model->parameters().front().scalar_type();
    for (const auto& sample : dataset) {
        const auto in = preprocess(sample, size);
        const auto out = model->forward(in.image.to(dtype), /*training=*/false, /*keep_head_features=*/true);
        const auto feat = out.head_features->squeeze(0).to(torch::kDouble);  // C x h x w
        auto mask = in.mask;
        if (feat.size(1) != mask.size(0))
            mask = torch::nn::functional::interpolate(
                       mask.to(torch::kFloat).unsqueeze(0).unsqueeze(0),
                       torch::nn::functional::InterpolateFuncOptions()
                           .size(std::vector<int64_t>{feat.size(1), feat.size(2)})
                           .mode(torch::kNearest))
                       .squeeze(0)
                       .squeeze(0)
                       .to(torch::kUInt8);
        for (int label = 0; label < 2; ++label) {
            const auto sel = (mask == label).to(torch::kDouble);
            const double count = sel.sum().item<double>();
            if (count == 0.0) continue;
            const auto mean = (feat * sel.unsqueeze(0)).sum({1, 2}) / count;
            metrics::ClassMeanFeature row;
            row.id = sample.id;
            row.label = label;
            row.values.assign(mean.data_ptr<double>(), mean.data_ptr<double>() + mean.numel());
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace cflnet
