#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "racdnn/attention.h"
#include "racdnn/nn.h"
#include "racdnn/tensor.h"

namespace racdnn {

struct ConvSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// unpool(k) -> conv kernel x kernel (in -> mid) -> conv 1x1 (mid -> out).
struct DecoderStage {
  std::size_t unpool = 2;
  std::size_t in = 0;
  std::size_t mid = 0;
  std::size_t out = 0;
  std::size_t kernel = 5;
  std::size_t padding = 2;
};

/// Layer layout shared by the initial network and the refinement network.
///
/// "paper": 224x224x3 input, 7x7x256 code, 56x56 map, 512-d location state.
/// "toy":   64x64x3 input, 4x4x32 code, 32x32 map.
/// "tiny":  16x16x3 input, 2x2x8 code, 16x16 map (gradient checks).
struct Preset {
  std::string name;
  std::size_t input_size = 0;
  std::size_t input_channels = 3;
  std::vector<ConvSpec> encoder;
  std::vector<DecoderStage> decoder;
  std::size_t recurrent_kernel = 3;
  std::size_t state_dim = 0;
  std::size_t loc_hidden = 0;
  ScaleRange scale_range;

  std::size_t code_channels() const;
  std::size_t code_size() const;
  std::size_t map_size() const;
};

Preset make_preset(std::string_view name);
// Checks the end-to-end shape algebra; throws kInvalidSpec.
void validate(const Preset& preset);

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};
using ParamList = std::vector<NamedTensor>;

// Tensors of `list` that receive gradients.
std::vector<Tensor> trainable(const ParamList& list);

class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const ConvSpec& spec, bool batchnorm, bool relu, std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode);
  void collect(const std::string& prefix, ParamList& out) const;

  Conv2dParams conv;
  std::optional<BatchNormParams> bn;
  bool relu = true;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const Preset& preset, std::mt19937_64& rng);

  Tensor forward(const Tensor& images, Mode mode);
  void collect(const std::string& prefix, ParamList& out) const;

  std::vector<ConvBlock> layers;
};

class Decoder {
 public:
  struct Stage {
    std::size_t unpool = 2;
    ConvBlock spatial;
    ConvBlock pointwise;
  };

  Decoder() = default;
  Decoder(const Preset& preset, std::mt19937_64& rng);

  // code [B,C,s,s] -> raw map [B,1,M,M]
  Tensor forward(const Tensor& code, Mode mode);
  void collect(const std::string& prefix, ParamList& out) const;
  void copy_from(const Decoder& other);
  void zero_output_layer();

  std::vector<Stage> stages;
};

struct InitialSaliency {
  Tensor raw;       // r_0, [B,1,M,M]
  Tensor saliency;  // sigmoid(r_0)
};

/// The initial convolutional-deconvolutional saliency network.
class SaliencyNet {
 public:
  SaliencyNet(const Preset& preset, std::uint64_t seed);

  // images [3,S,S] or [B,3,S,S]
  Tensor forward(const Tensor& images, Mode mode);
  InitialSaliency initial_saliency(const Tensor& images, Mode mode);

  ParamList parameters();
  const Preset& preset() const { return preset_; }

  Encoder encoder;
  Decoder decoder;

 private:
  Preset preset_;
};

struct RecurrentState {
  Tensor h1;  // [B,C,s,s]
  Tensor h2;  // [B,D]
};

struct TraceEntry {
  std::vector<AffineAttention> window;  // one per batch item
  Tensor patch;                         // x_i, [B,3,S,S]
  Tensor delta;                         // canvas-space refinement, [B,1,M,M]
  Tensor running;                       // r_i
};

struct RefinementTrace {
  std::vector<TraceEntry> entries;
};

struct RefinementResult {
  Tensor raw;       // r_N
  Tensor saliency;  // sigmoid(r_N)
  RefinementTrace trace;
};

/// Recurrent attentional refinement network.
///
/// Iteration 0 observes the whole image through a context encoder; each
/// later iteration attends to a window, updates the convolutional state h1
/// and the vector state h2, writes a decoded refinement back into that window
/// of the running map, and regresses the next window from h2.
class RefinementNet {
 public:
  RefinementNet(const Preset& preset, std::uint64_t seed);

  // Copies a trained initial decoder into DecNN_r and zeroes its output
  // projection so the first refinement deltas are exactly zero.
  void init_decoder_from(const Decoder& trained);

  // Returns (h1_0, h2_0) and tau_1 as attention parameters [B,3].
  std::pair<RecurrentState, Tensor> init_state(const Tensor& images, Mode mode);
  Tensor attend(const Tensor& images, const Tensor& tau);
  Tensor encode(const Tensor& patch, Mode mode);
  Tensor conv_recurrent_step(const Tensor& z1, const Tensor& h1_prev, Mode mode);
  Tensor fc_recurrent_step(const Tensor& h1, const Tensor& h2_prev, Mode mode);
  Tensor localize(const Tensor& h2, Mode mode);
  Tensor refine_step(const Tensor& r_prev, const Tensor& h1, const Tensor& tau, Mode mode);
  // Decoded refinement placed on the canvas (zero outside the window).
  Tensor refinement_delta(const Tensor& h1, const Tensor& tau, Mode mode);

  // `iterations` counts the 0-th (context) iteration, so N = 1 performs no
  // refinement and N = 9 performs eight attended steps.
  RefinementResult run_refinement(const Tensor& images, const Tensor& r0, std::size_t iterations, Mode mode);

  ParamList parameters();
  const Preset& preset() const { return preset_; }

  Encoder context_encoder;
  Encoder encoder;
  Conv2dParams input_conv;       // W1_I
  BatchNormParams input_bn;
  Conv2dParams recurrent_conv;   // W1_R, b1
  LinearParams state_input;      // W2_I
  BatchNormParams state_bn;
  LinearParams state_recurrent;  // W2_R, b2
  LinearParams loc_hidden;       // W_loc1
  BatchNormParams loc_bn;
  LinearParams loc_out;          // W_loc2
  Decoder decoder;

 private:
  Preset preset_;
};

// BCE between sigmoid(raw) and a binary target, evaluated from logits.
Tensor saliency_loss(const Tensor& raw, const Tensor& target);

// Adds a batch axis to [C,H,W] inputs; [B,C,H,W] passes through.
Tensor as_batch(const Tensor& images);

}  // namespace racdnn
