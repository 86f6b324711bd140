#pragma once

#include <string>

#include "stril/optim.hpp"

namespace stril {

// Binary checkpoint: magic "STRILCKPT", a u32 format version, then one
// record per parameter in sorted-name order: u32 name length, UTF-8 name,
// u32 rank, u32 per dimension, little-endian fp64 payload. Records run to
// end of file. Round-trips are bit-exact.
inline constexpr char kCheckpointMagic[] = "STRILCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

}  // namespace stril
