#pragma once

#include <string>

#include "cflnet/model.hpp"

namespace cflnet {

inline constexpr const char* kCheckpointFormat = "cflnet-checkpoint-v1";

/// Single torch archive: format tag, model config (JSON) and every parameter
/// and buffer under its hierarchical module name.
void save_checkpoint(CflNet& model, const std::string& path);

/// Rebuilds the model from the stored config and loads its weights.
/// Throws DataError on unreadable files, unknown format tags or bad configs.
CflNet load_checkpoint(const std::string& path);

/// Config stored in a checkpoint, without building the model.
ModelConfig read_checkpoint_config(const std::string& path);

} // namespace cflnet
