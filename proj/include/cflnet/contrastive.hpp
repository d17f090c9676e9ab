#pragma once

// Patch-partitioned supervised contrastive loss.
//
// A projection map F (C x H x W, channel-major) is split into a k x k grid of
// patches. Each patch is averaged into one C-dim vector and L2-normalised.
// The ground-truth mask is split on the same grid and each patch takes the
// majority label (ties go to 1, the tampered class). The loss treats every
// pooled embedding as an anchor; for anchor i with same-label set A_i and
// different-label set N_i
//
//   L_i = 1/|A_i| * sum_{p in A_i} -log( e^{s_ip} / (e^{s_ip} + sum_{q in N_i} e^{s_iq}) )
//
// with s_ij = f_i . f_j / tau. Anchors with an empty A_i contribute 0 but are
// still counted in the 1/n average. Degenerate (all-zero) patches are neither
// anchors nor keys.
//
// Parallel kernels live in cflnet::contrastive; single-threaded baselines
// with the same contracts live in cflnet::contrastive::reference.

#include <cstdint>
#include <span>
#include <vector>

namespace cflnet::contrastive {

template <class T>
struct PatchEmbeddings {
    int count = 0;   // k * k
    int dim = 0;     // channels of F
    int grid = 0;    // k
    int patch_h = 0;
    int patch_w = 0;
    std::vector<T> embeddings;     // count x dim, unit rows; zero rows where !valid
    std::vector<T> norms;          // L2 norm of each pooled mean before normalisation
    std::vector<std::uint8_t> valid;
};

struct SupConResult {
    double loss = 0.0;
    int anchors_used = 0;  // anchors with a nonempty positive set
};

template <class T>
struct PatchLoss {
    double loss = 0.0;
    int anchors_used = 0;
    std::vector<T> grad;  // dL/dF, same layout as F; empty if not requested
};

/// Mean-pool F over a k x k grid, then L2-normalise each patch vector.
/// Throws InvalidInput if k does not divide H and W, or sizes disagree.
template <class T>
PatchEmbeddings<T> partition_and_pool(std::span<const T> feature, int channels, int height, int width, int k);

/// Majority label per patch of a binary H x W mask; ties assign 1.
/// Throws InvalidInput on non-binary values or if k does not divide H and W.
std::vector<std::uint8_t> downsample_mask_majority(std::span<const std::uint8_t> mask, int height, int width, int k);

/// L_CON over n unit rows of width d. `valid` (optional, length n) excludes rows.
/// Throws InvalidParameter for tau <= 0, InvalidInput for non-unit valid rows
/// (|norm - 1| > 1e-3), non-binary labels or mismatched sizes.
template <class T>
SupConResult supcon_loss(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                         double tau, std::span<const std::uint8_t> valid = {});

/// As supcon_loss, also writing dL/d(unit embeddings) into `grad` (n x d).
template <class T>
SupConResult supcon_loss_grad(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                              double tau, std::span<T> grad, std::span<const std::uint8_t> valid = {});

/// Back-propagate through x / ||x||: returns dL/dx for rows given unit rows,
/// their pre-normalisation norms and dL/d(unit rows). Invalid rows get zero.
template <class T>
std::vector<T> normalize_backward(const PatchEmbeddings<T>& pooled, std::span<const T> grad_unit);

/// Back-propagate dL/d(pooled means) to dL/dF (each pixel receives 1/(h*w)).
template <class T>
std::vector<T> pool_backward(const PatchEmbeddings<T>& pooled, std::span<const T> grad_mean, int height, int width);

/// Full per-image path: pool F, downsample the mask, evaluate L_CON and
/// optionally dL_CON/dF. The mask may be larger than F (heads at reduced
/// stride); both must be divisible by k.
template <class T>
PatchLoss<T> patch_supcon(std::span<const T> feature, int channels, int height, int width,
                          std::span<const std::uint8_t> mask, int mask_height, int mask_width, int k, double tau,
                          bool want_grad);

namespace reference {
template <class T>
PatchEmbeddings<T> partition_and_pool(std::span<const T> feature, int channels, int height, int width, int k);
std::vector<std::uint8_t> downsample_mask_majority(std::span<const std::uint8_t> mask, int height, int width, int k);
template <class T>
SupConResult supcon_loss(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                         double tau, std::span<const std::uint8_t> valid = {});
template <class T>
SupConResult supcon_loss_grad(std::span<const T> embeddings, int n, int d, std::span<const std::uint8_t> labels,
                              double tau, std::span<T> grad, std::span<const std::uint8_t> valid = {});
} // namespace reference

} // namespace cflnet::contrastive
