#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "racdnn/data.h"
#include "racdnn/metrics.h"
#include "racdnn/network.h"
#include "racdnn/optim.h"

namespace racdnn {

struct Batch {
  Tensor images;   // [B,3,S,S]
  Tensor targets;  // [B,1,M,M], binary
};

// Image resized to the preset input size, [3,S,S].
Tensor network_input(const Tensor& image, const Preset& preset);
// Mask resized to the map size and thresholded at 0.5, [1,M,M].
Tensor network_target(const Tensor& mask, const Preset& preset);
Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices, const Preset& preset);

// Throws kNumeric if any value or gradient is NaN or infinite.
void check_finite(const Tensor& t, const char* what);
void check_finite_grads(std::span<const Tensor> params);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};
using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 8;
  bool augment = true;
  std::uint64_t seed = 0;
};

// Adam (default) or RMSProp on the initial network; plateau decay on validation BCE (training
// BCE when `val` is empty).
std::vector<EpochLog> train_initial(SaliencyNet& net, Adam& optimizer, PlateauSchedule& schedule,
                                    std::span<const Sample> train, std::span<const Sample> val,
                                    const TrainConfig& config, const EpochCallback& on_epoch = {});
std::vector<EpochLog> train_initial(SaliencyNet& net, RmsProp& optimizer, PlateauSchedule& schedule,
                                    std::span<const Sample> train, std::span<const Sample> val,
                                    const TrainConfig& config, const EpochCallback& on_epoch = {});

// RMSProp (default) or Adam on the refinement network with elementwise clipping; the initial
// network is frozen and supplies r_0 in inference mode.
std::vector<EpochLog> train_refinement(RefinementNet& net, SaliencyNet& initial, RmsProp& optimizer,
                                       PlateauSchedule& schedule, std::size_t iterations,
                                       std::span<const Sample> train, std::span<const Sample> val,
                                       const TrainConfig& config, const EpochCallback& on_epoch = {});
std::vector<EpochLog> train_refinement(RefinementNet& net, SaliencyNet& initial, Adam& optimizer,
                                       PlateauSchedule& schedule, std::size_t iterations,
                                       std::span<const Sample> train, std::span<const Sample> val,
                                       const TrainConfig& config, const EpochCallback& on_epoch = {});

double initial_loss(SaliencyNet& net, std::span<const Sample> samples, std::size_t batch_size = 16);
double refinement_loss(RefinementNet& net, SaliencyNet& initial, std::size_t iterations,
                       std::span<const Sample> samples, std::size_t batch_size = 16);

// Inference-mode saliency in [0,1], resized to the image's own H x W.
Tensor predict_initial(SaliencyNet& net, const Tensor& image);
Tensor predict_refined(RefinementNet& net, SaliencyNet& initial, std::size_t iterations, const Tensor& image,
                       RefinementTrace* trace = nullptr);

enum class Stage { kInitial, kRefined };

// Runs every sample through the chosen stage and scores it against its mask.
MetricsReport evaluate_stage(Stage stage, SaliencyNet& initial, RefinementNet* refine, std::size_t iterations,
                             std::span<const Sample> samples, FAggregation aggregation = FAggregation::kMeanCurve);

}  // namespace racdnn
