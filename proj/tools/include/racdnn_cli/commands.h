#pragma once

#include <iosfwd>
#include <memory>
#include <optional>

#include "racdnn/metrics.h"
#include "racdnn/network.h"
#include "racdnn_cli/checkpoint.h"
#include "racdnn_cli/config.h"

namespace racdnn::cli {

// Networks reconstructed from a checkpoint.
struct LoadedModels {
  RunConfig initial_config;
  std::optional<RunConfig> refine_config;
  std::unique_ptr<SaliencyNet> initial;
  std::unique_ptr<RefinementNet> refine;  // null for an initial-only checkpoint
};

LoadedModels load_models(const Checkpoint& checkpoint);

// Each command writes its human-readable log to `log`.
void cmd_gen_data(const RunConfig& config, std::ostream& log);
void cmd_train_init(const RunConfig& config, std::ostream& log);
void cmd_train_refine(const RunConfig& config, std::ostream& log);
MetricsReport cmd_eval(const RunConfig& config, std::ostream& log);
void cmd_infer(const RunConfig& config, std::ostream& log);

// Parses argv, dispatches, and maps failures to exit statuses with a
// one-line diagnostic on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace racdnn::cli
