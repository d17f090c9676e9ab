#pragma once

// Training objective: class-weighted cross-entropy plus the patch contrastive
// term, each computed per image and averaged over the batch.

#include <torch/torch.h>

#include <array>

#include "cflnet/model.hpp"

namespace cflnet {

struct LossConfig {
    int grid = 64;                               // k: patches per side
    double temperature = 0.1;
    std::array<double, 2> ce_weights = {1.0, 10.0};  // (untampered, tampered)
    bool use_contrastive = true;                 // false: CE-only ablation
    bool sum_over_batch = false;                 // contrastive term summed instead of averaged
};

struct LossBreakdown {
    torch::Tensor total;  // differentiable scalar
    double l_ce = 0.0;
    double l_con = 0.0;
    double total_value = 0.0;  // l_ce + l_con
    int anchors_used = 0;
};

/// Weighted mean of per-pixel -log softmax(true class), per image, then
/// averaged over the batch. `logits` B x 2 x H x W (or 2 x H x W), `mask`
/// B x H x W (or H x W) with values in {0, 1}.
torch::Tensor weighted_ce_loss(const torch::Tensor& logits, const torch::Tensor& mask,
                               std::array<double, 2> class_weights = {1.0, 10.0});

/// Patch contrastive loss of a projection batch (B x D x h x w) against
/// full-resolution masks (B x H x W). Differentiable w.r.t. the projection;
/// the backward pass is the analytic gradient from the contrastive kernels.
/// `anchors_used` (optional) receives the summed anchor count.
torch::Tensor patch_contrastive_loss(const torch::Tensor& projection, const torch::Tensor& mask, int grid,
                                     double temperature, bool sum_over_batch = false, int* anchors_used = nullptr);

/// L = L_CE + L_CON. Throws ContractViolation if the contrastive term is
/// enabled and `output` has no projection map.
LossBreakdown combined_loss(const ModelOutput& output, const torch::Tensor& mask, const LossConfig& cfg);

} // namespace cflnet
