#include "racdnn/ops.h"

#include <cmath>

#include "gemm.h"

namespace racdnn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  detail::check_shape(a.shape() == b.shape(), op,
                      "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F>
Tensor unary(const Tensor& a, F&& f) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return detail::make_result(a.shape(), std::move(out));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor result = detail::make_result(a.shape(), std::move(out));
  if (detail::needs_grad({&a, &b})) {
    detail::record("add", {a, b}, result, [a, b](std::span<const double> g) {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = detail::grad_of(*t);
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  Tensor result = detail::make_result(a.shape(), std::move(out));
  if (detail::needs_grad({&a, &b})) {
    detail::record("sub", {a, b}, result, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = detail::grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = detail::grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor result = detail::make_result(a.shape(), std::move(out));
  if (detail::needs_grad({&a, &b})) {
    detail::record("mul", {a, b}, result, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = detail::grad_of(a);
        auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = detail::grad_of(b);
        auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, double b) {
  Tensor result = unary(a, [b](double x) { return x + b; });
  if (detail::needs_grad({&a})) {
    detail::record("add_scalar", {a}, result, [a](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor result = unary(a, [factor](double x) { return x * factor; });
  if (detail::needs_grad({&a})) {
    detail::record("scale", {a}, result, [a, factor](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return result;
}

Tensor relu(const Tensor& a) {
  Tensor result = unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
  if (detail::needs_grad({&a})) {
    detail::record("relu", {a}, result, [a](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      auto x = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) ga[i] += g[i];
      }
    });
  }
  return result;
}

Tensor sigmoid(const Tensor& a) {
  Tensor result = unary(a, stable_sigmoid);
  if (detail::needs_grad({&a})) {
    detail::record("sigmoid", {a}, result, [a, result](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      auto s = result.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  }
  return result;
}

Tensor tanh(const Tensor& a) {
  Tensor result = unary(a, [](double x) { return std::tanh(x); });
  if (detail::needs_grad({&a})) {
    detail::record("tanh", {a}, result, [a, result](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      auto t = result.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - t[i] * t[i]);
    });
  }
  return result;
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b, double scalar) {
  switch (kind) {
    case Elementwise::kAdd: return add(a, b);
    case Elementwise::kSub: return sub(a, b);
    case Elementwise::kMul: return mul(a, b);
    case Elementwise::kRelu: return relu(a);
    case Elementwise::kSigmoid: return sigmoid(a);
    case Elementwise::kScale: return scale(a, scalar);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown elementwise kind");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_shape(a.rank() == 2 && b.rank() == 2, "matmul", "operands must be rank 2");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::check_shape(b.dim(0) == k, "matmul",
                      "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor result = detail::make_result({m, n}, std::move(out));
  if (detail::needs_grad({&a, &b})) {
    detail::record("matmul", {a, b}, result, [a, b, m, n, k](std::span<const double> g) {
      if (a.requires_grad()) {
        // dA = G B^T
        detail::gemm_nt(m, k, n, g.data(), b.data().data(), detail::grad_of(a).data());
      }
      if (b.requires_grad()) {
        // dB = A^T G
        detail::gemm_tn(k, n, m, a.data().data(), g.data(), detail::grad_of(b).data());
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor result = detail::make_result({1}, {acc});
  if (detail::needs_grad({&a})) {
    detail::record("sum", {a}, result, [a](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      for (double& v : ga) v += g[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor result = detail::make_result({1}, {acc * inv});
  if (detail::needs_grad({&a})) {
    detail::record("mean", {a}, result, [a, inv](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      for (double& v : ga) v += g[0] * inv;
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  detail::check_shape(!shape.empty() && shape_numel(shape) == a.numel(), "reshape",
                      shape_str(a.shape()) + " -> " + shape_str(shape));
  for (std::size_t d : shape) detail::check_shape(d > 0, "reshape", "zero dimension");
  Tensor result = detail::make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (detail::needs_grad({&a})) {
    detail::record("reshape", {a}, result, [a](std::span<const double> g) {
      auto ga = detail::grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

}  // namespace racdnn
