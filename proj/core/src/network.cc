#include "racdnn/network.h"

#include <algorithm>

#include "racdnn/ops.h"

namespace racdnn {

namespace {

void add_conv(const std::string& prefix, const Conv2dParams& p, ParamList& out) {
  out.push_back({prefix + "/weight", p.weights, true});
  if (p.bias.defined()) out.push_back({prefix + "/bias", p.bias, true});
}

void add_bn(const std::string& prefix, const BatchNormParams& p, ParamList& out) {
  out.push_back({prefix + "/gamma", p.gamma, true});
  out.push_back({prefix + "/beta", p.beta, true});
  out.push_back({prefix + "/running_mean", p.running_mean, false});
  out.push_back({prefix + "/running_var", p.running_var, false});
}

void add_linear(const std::string& prefix, const LinearParams& p, ParamList& out) {
  out.push_back({prefix + "/weight", p.weights, true});
  if (p.bias.defined()) out.push_back({prefix + "/bias", p.bias, true});
}

void zero(Tensor t) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

}  // namespace

std::size_t Preset::code_channels() const { return encoder.empty() ? input_channels : encoder.back().out; }

std::size_t Preset::code_size() const {
  std::size_t s = input_size;
  for (const auto& l : encoder) s = conv_output_size(s, l.kernel, l.stride, l.padding);
  return s;
}

std::size_t Preset::map_size() const {
  std::size_t s = code_size();
  for (const auto& st : decoder) s = conv_output_size(s * st.unpool, st.kernel, 1, st.padding);
  return s;
}

Preset make_preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  auto enc = [](std::initializer_list<std::size_t> channels) {
    std::vector<ConvSpec> layers;
    auto it = channels.begin();
    for (std::size_t prev = *it++; it != channels.end(); prev = *it++) layers.push_back({prev, *it, 3, 2, 1});
    return layers;
  };
  if (name == "paper") {
    p.input_size = 224;
    p.encoder = enc({3, 32, 64, 128, 256, 256});
    p.decoder = {{2, 256, 128, 128}, {2, 128, 64, 64}, {2, 64, 32, 1}};
    p.state_dim = 512;
    p.loc_hidden = 256;
  } else if (name == "toy") {
    p.input_size = 64;
    p.encoder = enc({3, 8, 16, 32, 32});
    p.decoder = {{2, 32, 16, 16}, {2, 16, 8, 8}, {2, 8, 8, 1}};
    p.state_dim = 64;
    p.loc_hidden = 32;
  } else if (name == "tiny") {
    p.input_size = 16;
    p.encoder = enc({3, 4, 8, 8});
    p.decoder = {{2, 8, 4, 4}, {2, 4, 4, 4}, {2, 4, 4, 1}};
    p.state_dim = 16;
    p.loc_hidden = 8;
  } else {
    throw Error(ErrorKind::kInvalidSpec, "unknown preset '" + std::string(name) + "' (expected paper, toy or tiny)");
  }
  validate(p);
  return p;
}

void validate(const Preset& preset) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kInvalidSpec, "preset '" + preset.name + "': " + why);
  };
  if (preset.input_size == 0 || preset.encoder.empty() || preset.decoder.empty()) fail("empty layout");
  std::size_t channels = preset.input_channels;
  for (const auto& l : preset.encoder) {
    if (l.in != channels) fail("encoder channel chain is broken");
    channels = l.out;
  }
  for (const auto& st : preset.decoder) {
    if (st.in != channels) fail("decoder channel chain is broken");
    if (st.unpool == 0) fail("unpool factor must be positive");
    channels = st.out;
  }
  if (channels != 1) fail("decoder must end with a single channel");
  try {
    if (preset.map_size() < 8) fail("map must be at least 8x8");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidSpec) throw;
    fail(e.what());
  }
  if (preset.recurrent_kernel % 2 == 0) fail("recurrent kernel must be odd to preserve size");
  if (preset.state_dim == 0 || preset.loc_hidden == 0) fail("state sizes must be positive");
  if (!(preset.scale_range.min > 0.0 && preset.scale_range.min <= preset.scale_range.max &&
        preset.scale_range.max <= 1.0)) {
    fail("scale range must satisfy 0 < min <= max <= 1");
  }
}

std::vector<Tensor> trainable(const ParamList& list) {
  std::vector<Tensor> out;
  for (const auto& p : list) {
    if (p.trainable) out.push_back(p.tensor);
  }
  return out;
}

ConvBlock::ConvBlock(const ConvSpec& spec, bool batchnorm, bool apply_relu, std::uint64_t seed)
    : conv(Conv2dParams::he_normal(spec.in, spec.out, spec.kernel, spec.stride, spec.padding, !batchnorm, seed)),
      relu(apply_relu) {
  if (batchnorm) bn = BatchNormParams::identity(spec.out);
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  Tensor y = conv2d(x, conv);
  if (bn) y = batchnorm(y, *bn, mode);
  return relu ? racdnn::relu(y) : y;
}

void ConvBlock::collect(const std::string& prefix, ParamList& out) const {
  add_conv(prefix + "/conv", conv, out);
  if (bn) add_bn(prefix + "/bn", *bn, out);
}

Encoder::Encoder(const Preset& preset, std::mt19937_64& rng) {
  for (const auto& spec : preset.encoder) layers.emplace_back(spec, true, true, rng());
}

Tensor Encoder::forward(const Tensor& images, Mode mode) {
  Tensor x = images;
  for (auto& l : layers) x = l.forward(x, mode);
  return x;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "/" + std::to_string(i), out);
}

Decoder::Decoder(const Preset& preset, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < preset.decoder.size(); ++i) {
    const auto& s = preset.decoder[i];
    const bool last = i + 1 == preset.decoder.size();
    Stage stage;
    stage.unpool = s.unpool;
    stage.spatial = ConvBlock({s.in, s.mid, s.kernel, 1, s.padding}, true, true, rng());
    // The final projection emits the raw map: no normalization, no activation.
    stage.pointwise = ConvBlock({s.mid, s.out, 1, 1, 0}, !last, !last, rng());
    stages.push_back(std::move(stage));
  }
}

Tensor Decoder::forward(const Tensor& code, Mode mode) {
  Tensor x = code;
  for (auto& s : stages) {
    x = unpool(x, s.unpool);
    x = s.spatial.forward(x, mode);
    x = s.pointwise.forward(x, mode);
  }
  return x;
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].spatial.collect(prefix + "/" + std::to_string(i) + "/spatial", out);
    stages[i].pointwise.collect(prefix + "/" + std::to_string(i) + "/pointwise", out);
  }
}

void Decoder::copy_from(const Decoder& other) {
  ParamList dst, src;
  collect("", dst);
  other.collect("", src);
  if (dst.size() != src.size()) throw Error(ErrorKind::kInvalidShape, "decoder layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw Error(ErrorKind::kInvalidShape, "decoder layouts differ at " + dst[i].name);
    }
    auto d = dst[i].tensor.mutable_data();
    auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

void Decoder::zero_output_layer() {
  auto& conv = stages.back().pointwise.conv;
  zero(conv.weights);
  if (conv.bias.defined()) zero(conv.bias);
}

Tensor as_batch(const Tensor& images) {
  if (images.rank() == 3) return reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)});
  detail::check_shape(images.rank() == 4, "network", "expected [C,H,W] or [B,C,H,W], got " + shape_str(images.shape()));
  return images;
}

namespace {

void check_input(const Preset& preset, const Tensor& x) {
  detail::check_shape(x.dim(1) == preset.input_channels && x.dim(2) == preset.input_size &&
                          x.dim(3) == preset.input_size,
                      "network",
                      "preset '" + preset.name + "' expects " + std::to_string(preset.input_channels) + "x" +
                          std::to_string(preset.input_size) + "x" + std::to_string(preset.input_size) +
                          " images, got " + shape_str(x.shape()));
}

}  // namespace

SaliencyNet::SaliencyNet(const Preset& preset, std::uint64_t seed) : preset_(preset) {
  validate(preset_);
  std::mt19937_64 rng(seed);
  encoder = Encoder(preset_, rng);
  decoder = Decoder(preset_, rng);
}

Tensor SaliencyNet::forward(const Tensor& images, Mode mode) {
  Tensor x = as_batch(images);
  check_input(preset_, x);
  return decoder.forward(encoder.forward(x, mode), mode);
}

InitialSaliency SaliencyNet::initial_saliency(const Tensor& images, Mode mode) {
  Tensor raw = forward(images, mode);
  return {raw, sigmoid(raw)};
}

ParamList SaliencyNet::parameters() {
  ParamList out;
  encoder.collect("encoder", out);
  decoder.collect("decoder", out);
  return out;
}

RefinementNet::RefinementNet(const Preset& preset, std::uint64_t seed) : preset_(preset) {
  validate(preset_);
  std::mt19937_64 rng(seed);
  const std::size_t c = preset_.code_channels(), s = preset_.code_size();
  const std::size_t k = preset_.recurrent_kernel, pad = k / 2;
  context_encoder = Encoder(preset_, rng);
  encoder = Encoder(preset_, rng);
  input_conv = Conv2dParams::he_normal(c, c, k, 1, pad, false, rng());
  input_bn = BatchNormParams::identity(c);
  recurrent_conv = Conv2dParams::he_normal(c, c, k, 1, pad, true, rng());
  state_input = LinearParams::he_normal(c * s * s, preset_.state_dim, false, rng());
  state_bn = BatchNormParams::identity(preset_.state_dim);
  state_recurrent = LinearParams::he_normal(preset_.state_dim, preset_.state_dim, true, rng());
  loc_hidden = LinearParams::he_normal(preset_.state_dim, preset_.loc_hidden, false, rng());
  loc_bn = BatchNormParams::identity(preset_.loc_hidden);
  loc_out = LinearParams::he_normal(preset_.loc_hidden, 3, true, rng());
  decoder = Decoder(preset_, rng);
}

void RefinementNet::init_decoder_from(const Decoder& trained) {
  decoder.copy_from(trained);
  decoder.zero_output_layer();
}

std::pair<RecurrentState, Tensor> RefinementNet::init_state(const Tensor& images, Mode mode) {
  Tensor x = as_batch(images);
  check_input(preset_, x);
  Tensor h1 = context_encoder.forward(x, mode);
  Tensor h2_prev = Tensor::create({x.dim(0), preset_.state_dim});
  Tensor h2 = fc_recurrent_step(h1, h2_prev, mode);
  Tensor tau = localize(h2, mode);
  return {RecurrentState{h1, h2}, tau};
}

Tensor RefinementNet::attend(const Tensor& images, const Tensor& tau) {
  return st(as_batch(images), tau, preset_.input_size, preset_.input_size);
}

Tensor RefinementNet::encode(const Tensor& patch, Mode mode) { return encoder.forward(patch, mode); }

Tensor RefinementNet::conv_recurrent_step(const Tensor& z1, const Tensor& h1_prev, Mode mode) {
  detail::check_shape(z1.shape() == h1_prev.shape(), "conv_recurrent_step",
                      "input " + shape_str(z1.shape()) + " vs state " + shape_str(h1_prev.shape()));
  Tensor from_input = batchnorm(conv2d(z1, input_conv), input_bn, mode);
  Tensor from_state = conv2d(h1_prev, recurrent_conv);
  return relu(add(from_input, from_state));
}

Tensor RefinementNet::fc_recurrent_step(const Tensor& h1, const Tensor& h2_prev, Mode mode) {
  detail::check_shape(h1.rank() == 4 && h2_prev.rank() == 2 && h1.dim(0) == h2_prev.dim(0), "fc_recurrent_step",
                      "expected h1 [B,C,s,s] and h2 [B,D]");
  Tensor flat = reshape(h1, {h1.dim(0), h1.numel() / h1.dim(0)});
  Tensor from_input = batchnorm(linear(flat, state_input), state_bn, mode);
  Tensor from_state = linear(h2_prev, state_recurrent);
  return relu(add(from_input, from_state));
}

Tensor RefinementNet::localize(const Tensor& h2, Mode mode) {
  Tensor hidden = relu(batchnorm(linear(h2, loc_hidden), loc_bn, mode));
  return constrain_attention(linear(hidden, loc_out), preset_.scale_range);
}

Tensor RefinementNet::refinement_delta(const Tensor& h1, const Tensor& tau, Mode mode) {
  const std::size_t m = preset_.map_size();
  return st_inverse(decoder.forward(h1, mode), tau, m, m);
}

Tensor RefinementNet::refine_step(const Tensor& r_prev, const Tensor& h1, const Tensor& tau, Mode mode) {
  return add(r_prev, refinement_delta(h1, tau, mode));
}

RefinementResult RefinementNet::run_refinement(const Tensor& images, const Tensor& r0, std::size_t iterations,
                                               Mode mode) {
  if (iterations < 1) throw Error(ErrorKind::kInvalidArgument, "refinement needs at least one iteration");
  Tensor x = as_batch(images);
  check_input(preset_, x);
  const std::size_t batch = x.dim(0), m = preset_.map_size();
  detail::check_shape(r0.shape() == Shape{batch, 1, m, m}, "run_refinement",
                      "r0 must be " + shape_str({batch, 1, m, m}) + ", got " + shape_str(r0.shape()));

  RefinementResult result;
  result.trace.entries.push_back(
      {std::vector<AffineAttention>(batch, AffineAttention{}), x, Tensor::create({batch, 1, m, m}), r0});

  Tensor r = r0;
  if (iterations > 1) {
    auto [state, tau] = init_state(x, mode);
    for (std::size_t i = 1; i < iterations; ++i) {
      Tensor patch = attend(x, tau);
      Tensor h1 = conv_recurrent_step(encode(patch, mode), state.h1, mode);
      Tensor delta = refinement_delta(h1, tau, mode);
      r = add(r, delta);

      TraceEntry entry{{}, patch, delta, r};
      for (std::size_t b = 0; b < batch; ++b) entry.window.push_back(attention_at(tau, b));
      result.trace.entries.push_back(std::move(entry));

      state.h1 = h1;
      // The window after the last iteration is never used.
      if (i + 1 < iterations) {
        state.h2 = fc_recurrent_step(h1, state.h2, mode);
        tau = localize(state.h2, mode);
      }
    }
  }
  result.raw = r;
  result.saliency = sigmoid(r);
  return result;
}

ParamList RefinementNet::parameters() {
  ParamList out;
  context_encoder.collect("context_encoder", out);
  encoder.collect("encoder", out);
  add_conv("recurrent1/input", input_conv, out);
  add_bn("recurrent1/input_bn", input_bn, out);
  add_conv("recurrent1/hidden", recurrent_conv, out);
  add_linear("recurrent2/input", state_input, out);
  add_bn("recurrent2/input_bn", state_bn, out);
  add_linear("recurrent2/hidden", state_recurrent, out);
  add_linear("localization/hidden", loc_hidden, out);
  add_bn("localization/hidden_bn", loc_bn, out);
  add_linear("localization/out", loc_out, out);
  decoder.collect("decoder", out);
  return out;
}

Tensor saliency_loss(const Tensor& raw, const Tensor& target) { return bce_with_logits(raw, target); }

}  // namespace racdnn
