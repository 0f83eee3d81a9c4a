#pragma once

#include <cstdint>
#include <string>

#include "diffcast/pipeline.hpp"

namespace diffcast {

inline constexpr char kCheckpointMagic[9] = "TDCKPT01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (all integers and floats little-endian) is documented in
/// docs/checkpoint.md. Saving then loading reproduces every stored double bit
/// for bit.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// In-memory forms of the same format.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace diffcast
