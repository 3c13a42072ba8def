#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "racdnn/error.h"

namespace racdnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace init {
struct Zeros {};
struct Constant {
  double value = 0.0;
};
struct Uniform {
  double lo = -1.0;
  double hi = 1.0;
  std::uint64_t seed = 0;
};
// N(0, 2 / fan_in).
struct HeNormal {
  std::size_t fan_in = 1;
  std::uint64_t seed = 0;
};
}  // namespace init

using Init = std::variant<init::Zeros, init::Constant, init::Uniform, init::HeNormal>;

class GradTape;

namespace detail {
struct TensorImpl;
struct Access;
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage. Values
/// produced by operations while a GradTape is active (and at least one
/// input requires a gradient) are recorded on that tape and must not be
/// mutated afterwards.
class Tensor {
 public:
  Tensor() = default;

  static Tensor create(Shape shape, const Init& init = init::Zeros{});
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Throws for tensors owned by a live tape.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  // Marks a leaf as a gradient target. Invalid for recorded results.
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Copy of the values with no gradient or graph attachment.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  friend class GradTape;
  friend struct detail::Access;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Append-only record of differentiable operations for one forward pass.
///
/// Constructing a tape makes it the active recorder for the current thread
/// until it is destroyed. Nodes are appended in execution order, so the
/// record is topologically sorted by construction.
class GradTape {
 public:
  struct NodeInfo {
    std::string_view op;
    // Tape index of each input, or -1 for leaves.
    std::vector<std::ptrdiff_t> inputs;
  };

  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active() noexcept;

  std::size_t size() const noexcept { return nodes_.size(); }
  NodeInfo node(std::size_t index) const;

  // Populates grad() of every leaf reachable from `loss`. Leaf gradients
  // accumulate across calls; call zero_grad() between steps.
  void backward(const Tensor& loss);
  std::size_t nodes_visited() const noexcept { return visited_; }

 private:
  friend struct detail::Access;
  struct Node;

  std::vector<std::unique_ptr<Node>> nodes_;
  GradTape* previous_ = nullptr;
  std::size_t visited_ = 0;
};

// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

/// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

namespace detail {

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

// True when an active tape exists and any input takes part in differentiation.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

Tensor make_result(Shape shape, std::vector<double> values);

void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output, BackwardFn fn);

// Gradient accumulator of `t`, zero-allocated on first use.
std::span<double> grad_of(const Tensor& t);

void check_shape(bool ok, std::string_view op, const std::string& detail);

}  // namespace detail

}  // namespace racdnn
