#pragma once

// Binary checkpoint container:
//   magic "CFMCKPT\0" | u32 version | formulation | architecture | i64 step |
//   u32 array count | per array: u32 name length, name, u32 rows, u32 cols,
//   rows*cols f64 (row-major).
// All integers and doubles are little-endian; saving and loading is
// bit-exact.

#include "cfm/formulation.hpp"
#include "cfm/network.hpp"

#include <filesystem>
#include <string>

namespace cfm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Formulation formulation;
  Network network;
  long step = 0;
};

std::string serialize_checkpoint(const Network& net, const Formulation& form, long step);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Network& net, const Formulation& form, long step);
// Throws IoError if the file cannot be read or is not a valid checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cfm
