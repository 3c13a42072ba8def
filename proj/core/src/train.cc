#include "racdnn/train.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "racdnn/error.h"
#include "racdnn/ops.h"

namespace racdnn {

namespace {

Tensor stack(std::span<const Tensor> items) {
  const Shape& item = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  std::vector<double> values;
  values.reserve(shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != item) throw Error(ErrorKind::kInvalidShape, "cannot stack differently shaped tensors");
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return Tensor::from(std::move(shape), std::move(values));
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t{out[0]} << 32) | out[1];
}

// Shuffled mini-batches; a trailing batch of one is dropped because batch
// norm needs two samples in training mode.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size < 2) throw Error(ErrorKind::kInvalidBatch, "training batch size must be at least 2");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(seed, epoch, 0x5eed));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    std::vector<std::size_t> b(order.begin() + i, order.begin() + std::min(count, i + batch_size));
    if (b.size() >= 2) batches.push_back(std::move(b));
  }
  if (batches.empty()) throw Error(ErrorKind::kInvalidBatch, "training set needs at least two samples");
  return batches;
}

std::vector<Sample> augmented(std::span<const Sample> train, const std::vector<std::size_t>& indices,
                              const TrainConfig& config, std::size_t epoch) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (const std::size_t i : indices) {
    out.push_back(config.augment ? augment(train[i], mix(config.seed, epoch, i)) : train[i]);
  }
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Tensor initial_raw(SaliencyNet& initial, const Tensor& images) {
  NoGradGuard no_grad;
  return initial.forward(images, Mode::kInfer).detach();
}

template <typename LossFn>
double batched_loss(std::span<const Sample> samples, std::size_t batch_size, const Preset& preset, LossFn&& loss_of) {
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "no samples to evaluate");
  NoGradGuard no_grad;
  double total = 0.0;
  const auto idx = all_indices(samples.size());
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    const std::span<const std::size_t> part(idx.data() + i, std::min(batch_size, idx.size() - i));
    const Batch b = make_batch(samples, part, preset);
    const double l = loss_of(b).item();
    if (!std::isfinite(l)) throw Error(ErrorKind::kNumeric, "non-finite validation loss");
    total += l * static_cast<double>(part.size());
  }
  return total / static_cast<double>(samples.size());
}

template <typename Optimizer, typename StepFn>
std::vector<EpochLog> fit(Optimizer& optimizer, PlateauSchedule& schedule, std::span<const Sample> train,
                          const TrainConfig& config, const EpochCallback& on_epoch, const Preset& preset,
                          StepFn&& step_loss, const std::function<double()>& validation) {
  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t seen = 0;
    for (const auto& indices : epoch_batches(train.size(), config.batch_size, config.seed, epoch)) {
      const auto samples = augmented(train, indices, config, epoch);
      const Batch batch = make_batch(samples, all_indices(samples.size()), preset);
      optimizer.zero_grad();
      double loss_value = 0.0;
      {
        GradTape tape;
        const Tensor loss = step_loss(batch);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw Error(ErrorKind::kNumeric, "non-finite training loss");
        tape.backward(loss);
      }
      check_finite_grads(optimizer.params());
      optimizer.step();
      total += loss_value * static_cast<double>(indices.size());
      seen += indices.size();
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / static_cast<double>(seen);
    log.val_loss = validation ? validation() : log.train_loss;
    log.lr = optimizer.state().lr;
    optimizer.state().lr = schedule.update(log.val_loss, optimizer.state().lr);
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

Tensor to_map(const Tensor& saliency, std::size_t m, std::size_t height, std::size_t width) {
  return resize_bilinear(reshape(saliency, {m, m}).detach(), height, width);
}

}  // namespace

Tensor network_input(const Tensor& image, const Preset& preset) {
  if (image.rank() != 3 || image.dim(0) != preset.input_channels) {
    throw Error(ErrorKind::kInvalidShape, "expected a [" + std::to_string(preset.input_channels) +
                                              ",H,W] image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) == preset.input_size && image.dim(2) == preset.input_size) return image.detach();
  return resize_bilinear(image.detach(), preset.input_size, preset.input_size);
}

Tensor network_target(const Tensor& mask, const Preset& preset) {
  const std::size_t m = preset.map_size();
  Tensor resized = resize_bilinear(mask.detach(), m, m);
  std::vector<double> values(resized.data().begin(), resized.data().end());
  for (double& v : values) v = v >= 0.5 ? 1.0 : 0.0;
  return Tensor::from({1, m, m}, std::move(values));
}

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices, const Preset& preset) {
  if (indices.empty()) throw Error(ErrorKind::kInvalidBatch, "empty batch");
  std::vector<Tensor> images, targets;
  for (const std::size_t i : indices) {
    images.push_back(network_input(samples[i].image, preset));
    targets.push_back(network_target(samples[i].mask, preset));
  }
  return {stack(images), stack(targets)};
}

void check_finite(const Tensor& t, const char* what) {
  for (const double v : t.data()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kNumeric, std::string("non-finite value in ") + what);
  }
}

void check_finite_grads(std::span<const Tensor> params) {
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (const double g : p.grad()) {
      if (!std::isfinite(g)) throw Error(ErrorKind::kNumeric, "non-finite gradient");
    }
  }
}

namespace {

template <typename Optimizer>
std::vector<EpochLog> fit_initial(SaliencyNet& net, Optimizer& optimizer, PlateauSchedule& schedule,
                                  std::span<const Sample> train, std::span<const Sample> val,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  std::function<double()> validation;
  if (!val.empty()) validation = [&] { return initial_loss(net, val); };
  return fit(optimizer, schedule, train, config, on_epoch, net.preset(),
             [&](const Batch& b) { return saliency_loss(net.forward(b.images, Mode::kTrain), b.targets); }, validation);
}

// Clipping happens between backward and the update.
template <typename Optimizer>
struct Clipped {
  Optimizer& inner;
  std::span<Tensor> params() { return inner.params(); }
  OptimState& state() { return inner.state(); }
  void zero_grad() { inner.zero_grad(); }
  void step() {
    clip_gradients(inner.params());
    inner.step();
  }
};

template <typename Optimizer>
std::vector<EpochLog> fit_refinement(RefinementNet& net, SaliencyNet& initial, Optimizer& optimizer,
                                     PlateauSchedule& schedule, std::size_t iterations,
                                     std::span<const Sample> train, std::span<const Sample> val,
                                     const TrainConfig& config, const EpochCallback& on_epoch) {
  std::function<double()> validation;
  if (!val.empty()) validation = [&] { return refinement_loss(net, initial, iterations, val); };
  Clipped<Optimizer> clipped{optimizer};
  return fit(clipped, schedule, train, config, on_epoch, net.preset(),
             [&](const Batch& b) {
               const Tensor r0 = initial_raw(initial, b.images);
               return saliency_loss(net.run_refinement(b.images, r0, iterations, Mode::kTrain).raw, b.targets);
             },
             validation);
}

}  // namespace

std::vector<EpochLog> train_initial(SaliencyNet& net, Adam& optimizer, PlateauSchedule& schedule,
                                    std::span<const Sample> train, std::span<const Sample> val,
                                    const TrainConfig& config, const EpochCallback& on_epoch) {
  return fit_initial(net, optimizer, schedule, train, val, config, on_epoch);
}

std::vector<EpochLog> train_initial(SaliencyNet& net, RmsProp& optimizer, PlateauSchedule& schedule,
                                    std::span<const Sample> train, std::span<const Sample> val,
                                    const TrainConfig& config, const EpochCallback& on_epoch) {
  return fit_initial(net, optimizer, schedule, train, val, config, on_epoch);
}

std::vector<EpochLog> train_refinement(RefinementNet& net, SaliencyNet& initial, RmsProp& optimizer,
                                       PlateauSchedule& schedule, std::size_t iterations,
                                       std::span<const Sample> train, std::span<const Sample> val,
                                       const TrainConfig& config, const EpochCallback& on_epoch) {
  return fit_refinement(net, initial, optimizer, schedule, iterations, train, val, config, on_epoch);
}

std::vector<EpochLog> train_refinement(RefinementNet& net, SaliencyNet& initial, Adam& optimizer,
                                       PlateauSchedule& schedule, std::size_t iterations,
                                       std::span<const Sample> train, std::span<const Sample> val,
                                       const TrainConfig& config, const EpochCallback& on_epoch) {
  return fit_refinement(net, initial, optimizer, schedule, iterations, train, val, config, on_epoch);
}

double initial_loss(SaliencyNet& net, std::span<const Sample> samples, std::size_t batch_size) {
  return batched_loss(samples, batch_size, net.preset(),
                      [&](const Batch& b) { return saliency_loss(net.forward(b.images, Mode::kInfer), b.targets); });
}

double refinement_loss(RefinementNet& net, SaliencyNet& initial, std::size_t iterations,
                       std::span<const Sample> samples, std::size_t batch_size) {
  return batched_loss(samples, batch_size, net.preset(), [&](const Batch& b) {
    const Tensor r0 = initial_raw(initial, b.images);
    return saliency_loss(net.run_refinement(b.images, r0, iterations, Mode::kInfer).raw, b.targets);
  });
}

Tensor predict_initial(SaliencyNet& net, const Tensor& image) {
  NoGradGuard no_grad;
  const Tensor s = net.initial_saliency(network_input(image, net.preset()), Mode::kInfer).saliency;
  check_finite(s, "initial saliency");
  return to_map(s, net.preset().map_size(), image.dim(1), image.dim(2));
}

Tensor predict_refined(RefinementNet& net, SaliencyNet& initial, std::size_t iterations, const Tensor& image,
                       RefinementTrace* trace) {
  NoGradGuard no_grad;
  const Tensor x = as_batch(network_input(image, net.preset()));
  RefinementResult result = net.run_refinement(x, initial_raw(initial, x), iterations, Mode::kInfer);
  check_finite(result.saliency, "refined saliency");
  if (trace) *trace = std::move(result.trace);
  return to_map(result.saliency, net.preset().map_size(), image.dim(1), image.dim(2));
}

MetricsReport evaluate_stage(Stage stage, SaliencyNet& initial, RefinementNet* refine, std::size_t iterations,
                             std::span<const Sample> samples, FAggregation aggregation) {
  if (stage == Stage::kRefined && refine == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "refined evaluation needs a refinement network");
  }
  DatasetMetrics metrics;
  for (const auto& s : samples) {
    const Tensor pred =
        stage == Stage::kInitial ? predict_initial(initial, s.image) : predict_refined(*refine, initial, iterations, s.image);
    metrics.add(pred.data(), s.mask.data());
  }
  return metrics.report(aggregation);
}

}  // namespace racdnn
