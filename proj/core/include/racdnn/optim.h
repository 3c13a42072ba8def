#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "racdnn/tensor.h"

namespace racdnn {

inline constexpr double kClipLow = -5.0;
inline constexpr double kClipHigh = 5.0;

// Elementwise clamp of every gradient into [lo, hi].
void clip_gradients(std::span<double> grads, double lo = kClipLow, double hi = kClipHigh);
void clip_gradients(std::span<Tensor> params, double lo = kClipLow, double hi = kClipHigh);

// Moment buffers mirror the parameter list they were created for.
struct OptimState {
  std::vector<std::vector<double>> first;   // Adam m / unused for RMSProp
  std::vector<std::vector<double>> second;  // Adam v / RMSProp mean square
  std::uint64_t step = 0;
  double lr = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  // Applies one bias-corrected update from the params' current gradients.
  void step();
  void zero_grad();

  std::span<Tensor> params() { return params_; }
  OptimState& state() { return state_; }
  const OptimState& state() const { return state_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  OptimState state_;
};

struct RmsPropConfig {
  double lr = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;
};

/// p -= lr * g / sqrt(ms + eps), with ms <- decay * ms + (1 - decay) * g^2.
class RmsProp {
 public:
  RmsProp(std::vector<Tensor> params, RmsPropConfig config = {});

  void step();
  void zero_grad();

  std::span<Tensor> params() { return params_; }
  OptimState& state() { return state_; }
  const OptimState& state() const { return state_; }
  const RmsPropConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  RmsPropConfig config_;
  OptimState state_;
};

/// Divides the learning rate by ten once validation loss has failed to
/// improve for `patience` consecutive epochs.
struct PlateauSchedule {
  int patience = 5;
  double factor = 0.1;
  double best = 0.0;
  int bad_epochs = 0;
  bool has_best = false;

  // Returns the learning rate to use next.
  double update(double validation_loss, double lr);
};

}  // namespace racdnn
