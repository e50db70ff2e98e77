#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stedq/network.hpp"
#include "stedq/text.hpp"

namespace stedq {

// Binary layout, all integers little-endian:
//   "STEDQ1"                      magic
//   u32 format_version
//   u64 total file length in bytes
//   u64 n, then n bytes           config + metadata as canonical key=value text
//   u32 block count
//   per block: u32 name length, name, u32 rank, rank x u64 dims, f64 values
//   32 bytes                      SHA-256 of every preceding byte
inline constexpr char kCheckpointMagic[] = "STEDQ1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
  std::size_t epoch = 0;
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double norm_mean = 0.0;
  double norm_std = 1.0;

  friend bool operator==(const TrainingMetadata& a, const TrainingMetadata& b);
};

struct Checkpoint {
  Network network;
  TrainingMetadata metadata;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kTruncated, kDigest, kMalformed };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint,
                                               std::uint32_t version = kCheckpointVersion);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes the checkpoint; returns its content digest as hex.
std::string save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hex of the trailing digest a checkpoint would be written with.
std::string checkpoint_digest(const Checkpoint& checkpoint);

}  // namespace stedq
