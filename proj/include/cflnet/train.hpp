#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cflnet/config.hpp"
#include "cflnet/data.hpp"
#include "cflnet/model.hpp"

namespace cflnet {

struct TrainLogRecord {
    std::string kind;  // "step" or "epoch"
    int epoch = 0;     // zero-based
    int step = 0;      // global optimizer step count after this record
    double l_ce = 0.0;
    double l_con = 0.0;
    double total = 0.0;
    double lr = 0.0;
    std::optional<double> val_auc;  // epoch records with a validation set
};

/// One JSON object per line; byte-stable for identical inputs.
std::string format_log_record(const TrainLogRecord& record);

struct TrainOptions {
    std::string output_dir;  // empty: keep checkpoints and the log in memory only
    std::function<void(const TrainLogRecord&)> on_record;
};

struct TrainResult {
    std::vector<TrainLogRecord> log;
    int steps = 0;
    std::optional<double> best_val_auc;
    std::string final_checkpoint;
    std::string best_checkpoint;
};

/// Applies the deterministic-algorithm and thread-count settings of `cfg`.
void configure_numerics(const TrainConfig& cfg);

/// Adam on L_CE (+ L_CON) with the step-decay schedule of `learning_rate`.
/// Writes train_log.jsonl, model_final.pt and model_best.pt under
/// options.output_dir when set. Throws DataError on a non-finite loss, naming
/// the offending sample ids, and InvalidInput on an empty training set.
TrainResult train(CflNet& model, std::span<const ForgerySample> train_set, std::span<const ForgerySample> val_set,
                  const TrainConfig& cfg, const TrainOptions& options = {});

} // namespace cflnet
