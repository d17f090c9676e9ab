#pragma once

// Training configuration and its flat `key = value` text form.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cflnet/losses.hpp"
#include "cflnet/model.hpp"

namespace cflnet {

struct TrainConfig {
    double lr = 1e-4;
    double lr_decay = 0.8;       // multiplier applied every lr_step_epochs
    int lr_step_epochs = 20;
    int batch_size = 4;
    int epochs = 100;
    int max_steps = 0;           // 0 = no cap
    int image_size = 256;
    int k = 64;
    double tau = 0.1;
    double ce_weight_untampered = 1.0;
    double ce_weight_tampered = 10.0;
    std::uint64_t seed = 0;
    bool contrastive = true;
    std::string con_batch_reduction = "mean";  // mean | sum
    bool flip = false;
    bool deterministic = true;
    int threads = 0;             // 0 = library default
    std::string train_split = "train";
    std::string val_split = "val";  // empty = no validation
    // Model shape.
    std::string encoder = "resnet50";
    int encoder_stages = 4;
    int embed_dim = 256;
    int aspp_channels = 256;
    std::vector<int> aspp_rates = {6, 12, 18};
    int head_stride = 1;
    bool freeze_rgb_bn = false;

    /// Sets one field from text. Throws InvalidParameter on unknown keys or
    /// unparsable values.
    void set(const std::string& key, const std::string& value);
    /// Throws InvalidParameter when fields are out of range or inconsistent.
    void validate() const;
    /// Every field as (key, value) in declaration order.
    std::vector<std::pair<std::string, std::string>> entries() const;
    std::string to_text() const;

    ModelConfig model_config() const;
    LossConfig loss_config() const;
};

/// Known configuration keys.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines ('#' comments, blank lines ignored) on top of defaults.
TrainConfig load_config(const std::string& path);
TrainConfig parse_config(const std::string& text);

/// Applies a `KEY=VALUE` override string.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// lr(e) = lr * lr_decay^floor(e / lr_step_epochs), e the zero-based epoch.
double learning_rate(const TrainConfig& cfg, int epoch);

} // namespace cflnet
