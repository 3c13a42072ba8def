#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

namespace racdnn::cli {

/// Every tunable of a run. Commands read the fields they need; the model
/// fields are snapshotted into checkpoints.
struct RunConfig {
  // Model and training.
  std::string preset = "toy";
  std::uint64_t seed = 0;
  std::size_t iterations = 9;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  bool augment = true;
  std::string optimizer_initial = "adam";
  std::string optimizer_refine = "rmsprop";
  double lr_initial = 1e-3;
  double lr_refine = 1e-4;
  int patience = 5;

  // Data generation.
  std::size_t count = 0;
  std::size_t size = 64;
  double scale_min = 0.1;
  double scale_max = 0.7;

  // Paths.
  std::filesystem::path data;
  std::filesystem::path init_ckpt;
  std::filesystem::path out_ckpt;
  std::filesystem::path ckpt;
  std::filesystem::path report_dir;
  std::filesystem::path image;
  std::filesystem::path out;
  std::filesystem::path trace_dir;
  std::string stage;  // "initial", "refined", or empty for the checkpoint's best stage

  std::size_t threads = 0;  // 0: hardware concurrency

  // Keys supplied by a flag or the config file rather than defaulted.
  std::set<std::string> explicit_keys;
};

// Throws UsageError on any out-of-range field.
void validate(const RunConfig& config);

// Full configuration, and the subset that determines model bytes.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json model_json(const RunConfig& config);
// Overlays the keys present in `json` onto `config`; unknown keys are errors.
// The applied keys are added to `explicit_keys`.
void apply_json(const nlohmann::json& json, RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace racdnn::cli
