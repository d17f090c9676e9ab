#include "cflnet/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "cflnet/checkpoint.hpp"
#include "cflnet/errors.hpp"
#include "cflnet/evaluate.hpp"
#include "cflnet/losses.hpp"
#include "cflnet/synth.hpp"

namespace cflnet {

std::string format_log_record(const TrainLogRecord& r) {
    nlohmann::ordered_json j;
    j["kind"] = r.kind;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["l_ce"] = r.l_ce;
    j["l_con"] = r.l_con;
    j["total"] = r.total;
    j["lr"] = r.lr;
    if (r.val_auc) j["val_auc"] = *r.val_auc;
    return j.dump();
}

void configure_numerics(const TrainConfig& cfg) {
    if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
    at::globalContext().setDeterministicAlgorithms(cfg.deterministic, /*warn_only=*/false);
}

TrainResult train(CflNet& model, std::span<const ForgerySample> train_set, std::span<const ForgerySample> val_set,
                  const TrainConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    if (train_set.empty()) throw InvalidInput("train: empty training set");
    if (model->config().input_size != cfg.image_size)
        throw InvalidParameter("train: model input_size differs from config image_size");
    configure_numerics(cfg);

    std::vector<torch::Tensor> images, masks;
    for (const auto& s : train_set) {
        auto in = preprocess(s, cfg.image_size);
        images.push_back(in.image);
        masks.push_back(in.mask);
    }

    std::ofstream log_file;
    TrainResult result;
    if (!options.output_dir.empty()) {
        std::filesystem::create_directories(options.output_dir);
        log_file.open(options.output_dir + "/train_log.jsonl", std::ios::trunc);
        if (!log_file) throw DataError("cannot write training log in '" + options.output_dir + "'");
        result.final_checkpoint = options.output_dir + "/model_final.pt";
        result.best_checkpoint = options.output_dir + "/model_best.pt";
    }
    auto emit = [&](const TrainLogRecord& r) {
        result.log.push_back(r);
        if (log_file) log_file << format_log_record(r) << '\n' << std::flush;
        if (options.on_record) options.on_record(r);
    };

    const auto loss_cfg = cfg.loss_config();
    torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.lr));
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x747261696eull));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    int step = 0;
    bool done = false;
    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        const double lr = learning_rate(cfg, epoch);
        for (auto& group : optimizer.param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        std::shuffle(order.begin(), order.end(), rng);
        model->train();

        double sum_ce = 0.0, sum_con = 0.0, sum_total = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size() && !done; begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<torch::Tensor> bi, bm;
            for (std::size_t i = begin; i < end; ++i) {
                auto img = images[order[i]];
                auto msk = masks[order[i]];
                if (cfg.flip && std::bernoulli_distribution(0.5)(rng)) {
                    img = img.flip({2});
                    msk = msk.flip({1});
                }
                bi.push_back(img);
                bm.push_back(msk);
            }
            const auto batch_images = torch::stack(bi);
            const auto batch_masks = torch::stack(bm);

            optimizer.zero_grad();
            const auto out = model->forward(batch_images, /*training=*/true);
            const auto loss = combined_loss(out, batch_masks, loss_cfg);
            if (!std::isfinite(loss.total_value)) {
                std::string ids;
                for (std::size_t i = begin; i < end; ++i) ids += (ids.empty() ? "" : ", ") + train_set[order[i]].id;
                throw DataError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                " (l_ce " + std::to_string(loss.l_ce) + ", l_con " + std::to_string(loss.l_con) +
                                "); batch ids: " + ids);
            }
            loss.total.backward();
            optimizer.step();
            ++step;

            sum_ce += loss.l_ce;
            sum_con += loss.l_con;
            sum_total += loss.total_value;
            ++batches;
            emit({"step", epoch, step, loss.l_ce, loss.l_con, loss.total_value, lr, std::nullopt});
            if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
        }

        TrainLogRecord summary{"epoch", epoch, step, sum_ce / batches, sum_con / batches, sum_total / batches, lr,
                               std::nullopt};
        if (!val_set.empty()) {
            try {
                summary.val_auc = evaluate_model(model, val_set).mean_auc;
            } catch (const DataError&) {
                // every validation image is single-class: no AUC to select on
            }
            if (summary.val_auc && (!result.best_val_auc || *summary.val_auc > *result.best_val_auc)) {
                result.best_val_auc = summary.val_auc;
                if (!result.best_checkpoint.empty()) save_checkpoint(model, result.best_checkpoint);
            }
        }
        emit(summary);
    }
    result.steps = step;
    if (!result.final_checkpoint.empty()) {
        save_checkpoint(model, result.final_checkpoint);
        if (val_set.empty()) save_checkpoint(model, result.best_checkpoint);
    }
    return result;
}

} // namespace cflnet
