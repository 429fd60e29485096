#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "vatlab/nn.hpp"

namespace vatlab {

/// A saved network plus free-form string metadata (task name, data seed, ...).
struct Checkpoint {
  MlpNetwork network;
  std::map<std::string, std::string> metadata;
};

// Binary layout, little-endian:
//   "VATLABCK" | u32 format version (1)
//   u32 metadata entries, each: u32 len, key bytes, u32 len, value bytes
//   u32 layers, each: u64 in, u64 out, u8 activation (0 relu, 1 identity),
//                     in*out f64 weights (row-major), out f64 biases
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vatlab
