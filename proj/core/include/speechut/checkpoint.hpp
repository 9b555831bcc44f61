#pragma once

#include <string>

#include "speechut/model.hpp"

namespace speechut {

// Checkpoint container, little-endian throughout:
//   magic "SUTC" | u32 format version | u64 metadata length | metadata text |
//   tensor records until EOF, each:
//     u32 name length | name bytes | u32 rank | u64 extents[rank] | f64 payload
struct Checkpoint {
  Params params;
  std::string metadata;  // "key = value" lines, typically the model config
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Params& params, const std::string& metadata);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace speechut
