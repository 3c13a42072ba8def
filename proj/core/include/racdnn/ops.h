#pragma once

#include "racdnn/tensor.h"

// Differentiable tensor operations. Binary operations require equal shapes;
// the only broadcasting supported is tensor-with-scalar.
namespace racdnn {

enum class Elementwise { kAdd, kSub, kMul, kRelu, kSigmoid, kScale };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// Dispatcher over the kinds above; `b` is ignored for unary kinds and
// `scalar` is used only by kScale.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {}, double scalar = 1.0);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Same data, new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace racdnn
