#pragma once

#include <cstdint>

#include "racdnn/tensor.h"

namespace racdnn {

enum class Mode { kTrain, kInfer };

/// Cross-correlation weights [C_out, C_in, k_h, k_w]. `bias` may be left
/// undefined for layers followed by batch normalization.
struct Conv2dParams {
  Tensor weights;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2dParams he_normal(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                                std::size_t padding, bool with_bias, std::uint64_t seed);
};

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  // running <- momentum * running + (1 - momentum) * batch
  double momentum = 0.9;
  double epsilon = 1e-5;

  static BatchNormParams identity(std::size_t channels);
};

struct LinearParams {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out], optional

  static LinearParams he_normal(std::size_t in, std::size_t out, bool with_bias, std::uint64_t seed);
};

std::size_t conv_output_size(std::size_t size, std::size_t kernel, std::size_t stride, std::size_t padding);

// input [C_in,H,W] or [B,C_in,H,W]; output keeps the input's rank.
Tensor conv2d(const Tensor& input, const Conv2dParams& p);

// Top-left-corner unpooling: out[c, k*i, k*j] = in[c, i, j], zeros elsewhere.
Tensor unpool(const Tensor& input, std::size_t k);

// input [B,C] or [B,C,H,W]. Training mode needs B >= 2 and updates the
// running statistics held by `p`.
Tensor batchnorm(const Tensor& input, BatchNormParams& p, Mode mode);

// input [in] or [B,in].
Tensor linear(const Tensor& input, const LinearParams& p);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy of probabilities `pred` (clamped to
// [kBceClamp, 1 - kBceClamp]) against a binary target.
Tensor bce_loss(const Tensor& pred, const Tensor& target);

// Same loss computed from raw logits without forming sigmoid(r); finite for
// any finite logit.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

}  // namespace racdnn
