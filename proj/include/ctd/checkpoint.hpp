#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctd/tensor.hpp"
#include "json.hpp"

namespace ctd {

// Binary container: "CTDC", u32 version, u64 metadata length + JSON text,
// u32 entry count, then per entry u32 name length + name, u32 rank, u64 dims,
// f64 payload. All integers and reals little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* Find(const std::string& name) const;
};

void WriteCheckpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint ReadCheckpoint(std::istream& is);
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace ctd
