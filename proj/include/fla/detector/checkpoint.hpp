#pragma once

#include <filesystem>

#include "fla/detector/net.hpp"

namespace fla {

/// Single-file binary checkpoint: magic + format version + serialized
/// DetectorConfig + float32 parameter blocks + FNV-1a checksum. Loading
/// validates the tag, the checksum and the config/block-shape consistency.
void save_checkpoint(const std::filesystem::path& path, const KeypointNet<float>& net);
KeypointNet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fla
