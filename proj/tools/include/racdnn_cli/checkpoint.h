#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "racdnn/network.h"
#include "racdnn/optim.h"

namespace racdnn::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Named tensors plus a configuration snapshot.
///
/// Layout (all integers little-endian): "RACD", u32 version, u64 record
/// count, then per record u32 name length, name bytes, u32 rank, u64 dims,
/// f64 values; finally u64 length and the UTF-8 JSON configuration.
struct Checkpoint {
  std::vector<CheckpointRecord> records;
  nlohmann::json config = nlohmann::json::object();

  const CheckpointRecord* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
  void put(std::string name, const Tensor& tensor);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws racdnn::Error(kCheckpoint) on bad magic, version or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Stores every tensor of `params` as "<prefix>/<name>".
void store_parameters(Checkpoint& checkpoint, const std::string& prefix, const ParamList& params);
// Copies stored values into `params`; every name must exist with the same shape.
void restore_parameters(const Checkpoint& checkpoint, const std::string& prefix, ParamList& params);

// Moment buffers keyed by the trainable parameter names of `params`, plus
// step count, learning rate and plateau state.
void store_optimizer(Checkpoint& checkpoint, const std::string& prefix, const ParamList& params,
                     const OptimState& state, const PlateauSchedule& schedule);
void restore_optimizer(const Checkpoint& checkpoint, const std::string& prefix, const ParamList& params,
                       OptimState& state, PlateauSchedule& schedule);

}  // namespace racdnn::cli
