#pragma once

// Oracle suites shared by `cflnet selftest` and the acceptance binary. Each
// check draws seeded random instances, runs the production kernel and the
// brute-force reference from oracles.hpp, and reports the worst discrepancy.

#include <cstdint>
#include <string>
#include <vector>

namespace cflnet::selftest {

struct OracleCheck {
    std::string name;
    int instances = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

/// supcon_loss vs the literal triple loop: n <= 64, d <= 16,
/// tau in {0.05, 0.1, 0.5}; relative error <= 1e-6. `tau_scale` != 1 is a
/// fault-injection hook that feeds a distorted temperature to the kernel.
OracleCheck check_supcon_oracle(int instances, std::uint64_t seed, double tau_scale = 1.0);

/// partition_and_pool (<= 1e-7) and downsample_mask_majority (exact) vs
/// nested loops, always including the 8x8 / k=4 configuration.
OracleCheck check_pooling(int instances, std::uint64_t seed);

/// pixel_auc vs concordant-pair counting (n <= 64, with ties); <= 1e-9.
OracleCheck check_auc(int instances, std::uint64_t seed);

/// Unclamped SRM response vs padded direct correlation on 16x16 images; <= 1e-6.
OracleCheck check_srm(int instances, std::uint64_t seed);

/// Patch pipeline at 1x1 patches vs the per-pixel loss on 8x8 maps; <= 1e-9.
OracleCheck check_pixel_reduction(int instances, std::uint64_t seed);

/// dL_CON/dF (through pooling and normalisation) and dL_CON/d(raw pooled
/// vectors) vs central differences, step 1e-5; relative error < 1e-4.
OracleCheck check_contrastive_gradient(int instances, std::uint64_t seed);

/// Serial reference kernels vs the OpenMP kernels.
OracleCheck check_parallel_consistency(int instances, std::uint64_t seed);

struct Options {
    std::uint64_t seed = 1234;
    double tau_scale = 1.0;  // fault-injection hook for the SupCon suite
};

std::vector<OracleCheck> run_all(const Options& options = {});

/// Deterministic text report, one line per suite plus a summary line.
std::string format_report(const std::vector<OracleCheck>& checks);

} // namespace cflnet::selftest
