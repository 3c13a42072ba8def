#include "racdnn/tensor.h"

#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace racdnn {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidShape: return "invalid-shape";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kNoGraph: return "no-graph";
    case ErrorKind::kInvalidScale: return "invalid-scale";
    case ErrorKind::kInvalidBatch: return "invalid-batch";
    case ErrorKind::kInvalidGroundTruth: return "invalid-groundtruth";
    case ErrorKind::kInvalidSpec: return "invalid-spec";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "unknown";
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  GradTape* tape = nullptr;
  std::size_t node = 0;
};

struct Access {
  static TensorImpl& impl(const Tensor& t) {
    if (!t.impl_) throw Error(ErrorKind::kInvalidArgument, "use of undefined tensor");
    return *t.impl_;
  }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }
  static void push_node(GradTape& tape, std::string_view op, std::vector<Tensor> inputs,
                        const Tensor& output, BackwardFn fn);
};

}  // namespace detail

struct GradTape::Node {
  std::string_view op;
  std::vector<Tensor> inputs;
  Tensor output;
  detail::BackwardFn backward;
};

namespace detail {

void Access::push_node(GradTape& tape, std::string_view op, std::vector<Tensor> inputs,
                       const Tensor& output, BackwardFn fn) {
  auto& out = impl(output);
  out.requires_grad = true;
  out.tape = &tape;
  out.node = tape.nodes_.size();
  auto node = std::make_unique<GradTape::Node>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->output = output;
  node->backward = std::move(fn);
  tape.nodes_.push_back(std::move(node));
}

}  // namespace detail

namespace {

thread_local GradTape* g_active_tape = nullptr;

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw Error(ErrorKind::kInvalidShape, "shape must be non-empty");
  for (std::size_t d : shape) {
    if (d == 0) throw Error(ErrorKind::kInvalidShape, "zero dimension in shape " + shape_str(shape));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::create(Shape shape, const Init& init) {
  validate_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  const std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(n, 0.0);
  std::visit(
      [&](const auto& rule) {
        using R = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<R, init::Constant>) {
          impl->data.assign(n, rule.value);
        } else if constexpr (std::is_same_v<R, init::Uniform>) {
          std::mt19937_64 rng(rule.seed);
          std::uniform_real_distribution<double> dist(rule.lo, rule.hi);
          for (double& v : impl->data) v = dist(rng);
        } else if constexpr (std::is_same_v<R, init::HeNormal>) {
          if (rule.fan_in == 0) throw Error(ErrorKind::kInvalidArgument, "he-normal fan_in must be positive");
          std::mt19937_64 rng(rule.seed);
          std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(rule.fan_in)));
          for (double& v : impl->data) v = dist(rng);
        }
      },
      init);
  return detail::Access::wrap(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorKind::kInvalidShape, "shape " + shape_str(shape) + " does not match " +
                                              std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return detail::Access::wrap(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return detail::Access::impl(*this).shape; }
std::size_t Tensor::rank() const { return shape().size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw Error(ErrorKind::kInvalidShape, "axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return detail::Access::impl(*this).data.size(); }

std::span<const double> Tensor::data() const { return detail::Access::impl(*this).data; }

std::span<double> Tensor::mutable_data() {
  auto& impl = detail::Access::impl(*this);
  if (impl.tape != nullptr) throw Error(ErrorKind::kInvalidArgument, "cannot mutate a recorded tensor");
  return impl.data;
}

double Tensor::item() const {
  const auto& impl = detail::Access::impl(*this);
  if (impl.data.size() != 1) throw Error(ErrorKind::kInvalidArgument, "item() needs a single-element tensor");
  return impl.data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& impl = detail::Access::impl(*this);
  if (impl.tape != nullptr) throw Error(ErrorKind::kInvalidArgument, "requires_grad is fixed for recorded tensors");
  impl.requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return detail::Access::impl(*this).tape == nullptr; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return detail::Access::impl(*this).grad; }

std::span<double> Tensor::mutable_grad() { return detail::grad_of(*this); }

void Tensor::zero_grad() {
  auto& impl = detail::Access::impl(*this);
  std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& impl = detail::Access::impl(*this);
  return from(impl.shape, impl.data);
}

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() {
  for (auto& node : nodes_) detail::Access::impl(node->output).tape = nullptr;
  g_active_tape = previous_;
}

GradTape* GradTape::active() noexcept { return g_active_tape; }

GradTape::NodeInfo GradTape::node(std::size_t index) const {
  const Node& n = *nodes_.at(index);
  NodeInfo info{n.op, {}};
  for (const Tensor& in : n.inputs) {
    const auto& impl = detail::Access::impl(in);
    info.inputs.push_back(impl.tape == this ? static_cast<std::ptrdiff_t>(impl.node) : -1);
  }
  return info;
}

void GradTape::backward(const Tensor& loss) {
  auto& loss_impl = detail::Access::impl(loss);
  if (loss_impl.data.size() != 1) {
    throw Error(ErrorKind::kInvalidArgument, "backward needs a scalar loss, got " + shape_str(loss_impl.shape));
  }
  if (loss_impl.tape != this) throw Error(ErrorKind::kNoGraph, "loss is not recorded on this tape");

  for (auto& node : nodes_) detail::Access::impl(node->output).grad.clear();
  loss_impl.grad.assign(1, 1.0);

  visited_ = 0;
  for (std::size_t i = loss_impl.node + 1; i-- > 0;) {
    Node& node = *nodes_[i];
    const auto& out = detail::Access::impl(node.output);
    if (out.grad.empty()) continue;
    node.backward(out.grad);
    ++visited_;
  }
}

void backward(const Tensor& loss) {
  auto& impl = detail::Access::impl(loss);
  if (impl.tape == nullptr) throw Error(ErrorKind::kNoGraph, "loss is not attached to a computation graph");
  impl.tape->backward(loss);
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Access::wrap(std::move(impl));
}

void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn) {
  if (g_active_tape == nullptr) return;
  Access::push_node(*g_active_tape, op, std::move(inputs), output, std::move(fn));
}

std::span<double> grad_of(const Tensor& t) {
  auto& impl = Access::impl(t);
  if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

void check_shape(bool ok, std::string_view op, const std::string& detail) {
  if (!ok) throw Error(ErrorKind::kInvalidShape, std::string(op) + ": " + detail);
}

}  // namespace detail

}  // namespace racdnn
