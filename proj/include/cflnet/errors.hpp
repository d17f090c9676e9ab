#pragma once

#include <stdexcept>
#include <string>

namespace cflnet {

/// Malformed tensor shapes, non-binary masks, mismatched sizes.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Out-of-range scalar parameters (temperature, grid size, learning rate).
struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A caller broke an API precondition that is not about data values,
/// e.g. asking for the contrastive term from an evaluation-mode output.
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

/// I/O and dataset problems: unreadable files, empty datasets, bad checkpoints.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cflnet
