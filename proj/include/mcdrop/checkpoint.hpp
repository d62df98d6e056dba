#pragma once

#include "mcdrop/model.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace mcdrop {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  Index epochs = 0;
  double final_loss = 0.0;
  std::string config;  // serialized run config, may be empty

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct Checkpoint {
  ModelSpec spec;
  ModelParams params;
  TrainingMeta meta;
};

/// Text header describing the spec and metadata, then the parameter arrays as
/// little-endian float64. Layout: docs/checkpoint_format.md.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partial checkpoint.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Atomic whole-file write used for every artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mcdrop
