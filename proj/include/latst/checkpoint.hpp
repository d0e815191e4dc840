#pragma once

#include <string>
#include <utility>
#include <vector>

#include "latst/tensor.hpp"

namespace latst {

// Named-tensor container, little-endian throughout:
//   magic "LATST1" (6 bytes)
//   u64 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims...,
//               row-major IEEE-754 binary64 data
//   u64 config text length, config bytes (flat key = value lines)
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string config_text;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace latst
