#include "racdnn/nn.h"

#include <algorithm>
#include <cmath>

#include "gemm.h"

namespace racdnn {

namespace {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, k_h, k_w, stride, pad, out_h, out_w;

  std::size_t col_rows() const { return c_in * k_h * k_w; }
  std::size_t col_cols() const { return out_h * out_w; }
};

void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const auto out_hw = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        double* row = cols + ((c * g.k_h + ki) * g.k_w + kj) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* in_grad) {
  const auto out_hw = g.col_cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        const double* row = cols + ((c * g.k_h + ki) * g.k_w + kj) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = in_grad + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.pad == 0; }

// Splits [C,...] / [B,C,...] into (batch, channels, spatial) and reports
// whether the batch axis was implicit.
struct BatchView {
  std::size_t batch;
  bool implicit_batch;
};

BatchView batch_view(const Tensor& t, std::size_t unbatched_rank) {
  if (t.rank() == unbatched_rank) return {1, true};
  if (t.rank() == unbatched_rank + 1) return {t.dim(0), false};
  return {0, false};
}

}  // namespace

Conv2dParams Conv2dParams::he_normal(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                                     std::size_t padding, bool with_bias, std::uint64_t seed) {
  Conv2dParams p;
  p.weights = Tensor::create({c_out, c_in, kernel, kernel}, init::HeNormal{c_in * kernel * kernel, seed});
  p.weights.set_requires_grad();
  if (with_bias) {
    p.bias = Tensor::create({c_out});
    p.bias.set_requires_grad();
  }
  p.stride = stride;
  p.padding = padding;
  return p;
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor::create({channels}, init::Constant{1.0});
  p.gamma.set_requires_grad();
  p.beta = Tensor::create({channels});
  p.beta.set_requires_grad();
  p.running_mean = Tensor::create({channels});
  p.running_var = Tensor::create({channels}, init::Constant{1.0});
  return p;
}

LinearParams LinearParams::he_normal(std::size_t in, std::size_t out, bool with_bias, std::uint64_t seed) {
  LinearParams p;
  p.weights = Tensor::create({out, in}, init::HeNormal{in, seed});
  p.weights.set_requires_grad();
  if (with_bias) {
    p.bias = Tensor::create({out});
    p.bias.set_requires_grad();
  }
  return p;
}

std::size_t conv_output_size(std::size_t size, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw Error(ErrorKind::kInvalidArgument, "conv stride must be positive");
  if (size + 2 * padding < kernel) {
    throw Error(ErrorKind::kInvalidShape, "conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                                              std::to_string(size + 2 * padding));
  }
  return (size + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Conv2dParams& p) {
  const BatchView bv = batch_view(input, 3);
  detail::check_shape(bv.batch > 0, "conv2d", "input must be [C,H,W] or [B,C,H,W], got " + shape_str(input.shape()));
  detail::check_shape(p.weights.rank() == 4, "conv2d", "weights must be [C_out,C_in,k_h,k_w]");
  const std::size_t off = bv.implicit_batch ? 0 : 1;

  ConvGeometry g{};
  g.batch = bv.batch;
  g.c_in = input.dim(off);
  g.h = input.dim(off + 1);
  g.w = input.dim(off + 2);
  g.c_out = p.weights.dim(0);
  g.k_h = p.weights.dim(2);
  g.k_w = p.weights.dim(3);
  g.stride = p.stride;
  g.pad = p.padding;
  detail::check_shape(p.weights.dim(1) == g.c_in, "conv2d",
                      "weights expect " + std::to_string(p.weights.dim(1)) + " input channels, got " +
                          std::to_string(g.c_in));
  if (p.bias.defined()) detail::check_shape(p.bias.shape() == Shape{g.c_out}, "conv2d", "bias must be [C_out]");
  g.out_h = conv_output_size(g.h, g.k_h, g.stride, g.pad);
  g.out_w = conv_output_size(g.w, g.k_w, g.stride, g.pad);

  const std::size_t in_sz = g.c_in * g.h * g.w;
  const std::size_t out_sz = g.c_out * g.out_h * g.out_w;
  const std::size_t rows = g.col_rows(), cols_n = g.col_cols();
  const bool pointwise = is_pointwise(g);

  std::vector<double> out(g.batch * out_sz, 0.0);
  std::vector<double> cols(pointwise ? 0 : rows * cols_n);
  const double* x = input.data().data();
  const double* wt = p.weights.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* col_ptr = x + b * in_sz;
    if (!pointwise) {
      im2col(g, col_ptr, cols.data());
      col_ptr = cols.data();
    }
    double* ob = out.data() + b * out_sz;
    if (p.bias.defined()) {
      auto bias = p.bias.data();
      for (std::size_t c = 0; c < g.c_out; ++c) std::fill(ob + c * cols_n, ob + (c + 1) * cols_n, bias[c]);
    }
    detail::gemm_nn(g.c_out, cols_n, rows, wt, col_ptr, ob);
  }

  Shape out_shape = bv.implicit_batch ? Shape{g.c_out, g.out_h, g.out_w} : Shape{g.batch, g.c_out, g.out_h, g.out_w};
  Tensor result = detail::make_result(std::move(out_shape), std::move(out));

  const Tensor weights = p.weights, bias = p.bias;
  if (detail::needs_grad({&input, &weights, &bias})) {
    detail::record("conv2d", {input, weights, bias.defined() ? bias : weights}, result,
                   [input, weights, bias, g, in_sz, out_sz, pointwise](std::span<const double> grad) {
                     const std::size_t rows = g.col_rows(), cols_n = g.col_cols();
                     std::vector<double> cols(pointwise ? 0 : rows * cols_n);
                     std::vector<double> dcols(rows * cols_n);
                     const double* x = input.data().data();
                     const double* wt = weights.data().data();
                     double* dw = weights.requires_grad() ? detail::grad_of(weights).data() : nullptr;
                     double* db = bias.defined() && bias.requires_grad() ? detail::grad_of(bias).data() : nullptr;
                     double* dx = input.requires_grad() ? detail::grad_of(input).data() : nullptr;
                     for (std::size_t b = 0; b < g.batch; ++b) {
                       const double* gb = grad.data() + b * out_sz;
                       if (db != nullptr) {
                         for (std::size_t c = 0; c < g.c_out; ++c) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < cols_n; ++j) acc += gb[c * cols_n + j];
                           db[c] += acc;
                         }
                       }
                       if (dw != nullptr) {
                         const double* col_ptr = x + b * in_sz;
                         if (!pointwise) {
                           im2col(g, col_ptr, cols.data());
                           col_ptr = cols.data();
                         }
                         detail::gemm_nt(g.c_out, rows, cols_n, gb, col_ptr, dw);
                       }
                       if (dx != nullptr) {
                         if (pointwise) {
                           detail::gemm_tn(rows, cols_n, g.c_out, wt, gb, dx + b * in_sz);
                         } else {
                           std::fill(dcols.begin(), dcols.end(), 0.0);
                           detail::gemm_tn(rows, cols_n, g.c_out, wt, gb, dcols.data());
                           col2im_add(g, dcols.data(), dx + b * in_sz);
                         }
                       }
                     }
                   });
  }
  return result;
}

Tensor unpool(const Tensor& input, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kInvalidArgument, "unpool factor must be >= 1");
  const BatchView bv = batch_view(input, 3);
  detail::check_shape(bv.batch > 0, "unpool", "input must be [C,H,W] or [B,C,H,W], got " + shape_str(input.shape()));
  const std::size_t off = bv.implicit_batch ? 0 : 1;
  const std::size_t planes = bv.batch * input.dim(off);
  const std::size_t h = input.dim(off + 1), w = input.dim(off + 2);
  const std::size_t oh = h * k, ow = w * k;

  std::vector<double> out(planes * oh * ow, 0.0);
  auto x = input.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[(pl * oh + i * k) * ow + j * k] = x[(pl * h + i) * w + j];
    }
  }
  Shape shape = input.shape();
  shape[off + 1] = oh;
  shape[off + 2] = ow;
  Tensor result = detail::make_result(std::move(shape), std::move(out));
  if (detail::needs_grad({&input})) {
    detail::record("unpool", {input}, result, [input, planes, h, w, k, oh, ow](std::span<const double> g) {
      auto gx = detail::grad_of(input);
      for (std::size_t pl = 0; pl < planes; ++pl) {
        for (std::size_t i = 0; i < h; ++i) {
          for (std::size_t j = 0; j < w; ++j) gx[(pl * h + i) * w + j] += g[(pl * oh + i * k) * ow + j * k];
        }
      }
    });
  }
  return result;
}

Tensor batchnorm(const Tensor& input, BatchNormParams& p, Mode mode) {
  detail::check_shape(input.rank() == 2 || input.rank() == 4, "batchnorm",
                      "input must be [B,C] or [B,C,H,W], got " + shape_str(input.shape()));
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t spatial = input.numel() / (batch * channels);
  detail::check_shape(p.gamma.shape() == Shape{channels}, "batchnorm", "parameter channel count mismatch");
  if (mode == Mode::kTrain && batch < 2) {
    throw Error(ErrorKind::kInvalidBatch, "batchnorm in training mode needs a batch of at least 2");
  }
  const double n = static_cast<double>(batch * spatial);
  auto x = input.data();
  auto gamma = p.gamma.data(), beta = p.beta.data();

  std::vector<double> mean(channels, 0.0), rstd(channels, 0.0);
  if (mode == Mode::kTrain) {
    std::vector<double> var(channels, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xs = x.data() + (b * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) mean[c] += xs[s];
      }
    }
    for (double& m : mean) m /= n;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xs = x.data() + (b * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) {
          const double d = xs[s] - mean[c];
          var[c] += d * d;
        }
      }
    }
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      var[c] /= n;
      rstd[c] = 1.0 / std::sqrt(var[c] + p.epsilon);
      rm[c] = p.momentum * rm[c] + (1.0 - p.momentum) * mean[c];
      rv[c] = p.momentum * rv[c] + (1.0 - p.momentum) * var[c] * n / (n - 1.0);
    }
  } else {
    auto rm = p.running_mean.data();
    auto rv = p.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      rstd[c] = 1.0 / std::sqrt(rv[c] + p.epsilon);
    }
  }

  std::vector<double> xhat(input.numel()), out(input.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        xhat[base + s] = (x[base + s] - mean[c]) * rstd[c];
        out[base + s] = gamma[c] * xhat[base + s] + beta[c];
      }
    }
  }
  Tensor result = detail::make_result(input.shape(), std::move(out));

  const Tensor g_t = p.gamma, b_t = p.beta;
  if (detail::needs_grad({&input, &g_t, &b_t})) {
    const bool train = mode == Mode::kTrain;
    detail::record("batchnorm", {input, g_t, b_t}, result,
                   [input, g_t, b_t, xhat = std::move(xhat), rstd = std::move(rstd), batch, channels, spatial, n,
                    train](std::span<const double> g) {
                     std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
                     for (std::size_t b = 0; b < batch; ++b) {
                       for (std::size_t c = 0; c < channels; ++c) {
                         const std::size_t base = (b * channels + c) * spatial;
                         for (std::size_t s = 0; s < spatial; ++s) {
                           sum_g[c] += g[base + s];
                           sum_gx[c] += g[base + s] * xhat[base + s];
                         }
                       }
                     }
                     if (g_t.requires_grad()) {
                       auto gg = detail::grad_of(g_t);
                       for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gx[c];
                     }
                     if (b_t.requires_grad()) {
                       auto gb = detail::grad_of(b_t);
                       for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_g[c];
                     }
                     if (!input.requires_grad()) return;
                     auto gx = detail::grad_of(input);
                     auto gamma = g_t.data();
                     for (std::size_t b = 0; b < batch; ++b) {
                       for (std::size_t c = 0; c < channels; ++c) {
                         const std::size_t base = (b * channels + c) * spatial;
                         const double k = gamma[c] * rstd[c];
                         for (std::size_t s = 0; s < spatial; ++s) {
                           if (train) {
                             gx[base + s] += k * (g[base + s] - sum_g[c] / n - xhat[base + s] * sum_gx[c] / n);
                           } else {
                             gx[base + s] += k * g[base + s];
                           }
                         }
                       }
                     }
                   });
  }
  return result;
}

Tensor linear(const Tensor& input, const LinearParams& p) {
  detail::check_shape(p.weights.rank() == 2, "linear", "weights must be [out,in]");
  const std::size_t out_dim = p.weights.dim(0), in_dim = p.weights.dim(1);
  const bool implicit_batch = input.rank() == 1;
  detail::check_shape(implicit_batch || input.rank() == 2, "linear", "input must be [in] or [B,in]");
  const std::size_t batch = implicit_batch ? 1 : input.dim(0);
  const std::size_t got = implicit_batch ? input.dim(0) : input.dim(1);
  detail::check_shape(got == in_dim, "linear",
                      "expected " + std::to_string(in_dim) + " inputs, got " + std::to_string(got));
  if (p.bias.defined()) detail::check_shape(p.bias.shape() == Shape{out_dim}, "linear", "bias must be [out]");

  std::vector<double> out(batch * out_dim, 0.0);
  if (p.bias.defined()) {
    auto bias = p.bias.data();
    for (std::size_t b = 0; b < batch; ++b) std::copy(bias.begin(), bias.end(), out.begin() + b * out_dim);
  }
  detail::gemm_nt(batch, out_dim, in_dim, input.data().data(), p.weights.data().data(), out.data());
  Tensor result = detail::make_result(implicit_batch ? Shape{out_dim} : Shape{batch, out_dim}, std::move(out));

  const Tensor w = p.weights, bias = p.bias;
  if (detail::needs_grad({&input, &w, &bias})) {
    detail::record("linear", {input, w, bias.defined() ? bias : w}, result,
                   [input, w, bias, batch, in_dim, out_dim](std::span<const double> g) {
                     if (input.requires_grad()) {
                       detail::gemm_nn(batch, in_dim, out_dim, g.data(), w.data().data(),
                                       detail::grad_of(input).data());
                     }
                     if (w.requires_grad()) {
                       detail::gemm_tn(out_dim, in_dim, batch, g.data(), input.data().data(),
                                       detail::grad_of(w).data());
                     }
                     if (bias.defined() && bias.requires_grad()) {
                       auto gb = detail::grad_of(bias);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[b * out_dim + o];
                       }
                     }
                   });
  }
  return result;
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  detail::check_shape(pred.shape() == target.shape(), "bce_loss",
                      "shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  const double inv_n = 1.0 / static_cast<double>(pred.numel());
  auto s = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double sc = std::clamp(s[i], kBceClamp, 1.0 - kBceClamp);
    acc -= t[i] * std::log(sc) + (1.0 - t[i]) * std::log(1.0 - sc);
  }
  Tensor result = detail::make_result({1}, {acc * inv_n});
  if (detail::needs_grad({&pred})) {
    detail::record("bce_loss", {pred}, result, [pred, target, inv_n](std::span<const double> g) {
      auto gp = detail::grad_of(pred);
      auto s = pred.data(), t = target.data();
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] < kBceClamp || s[i] > 1.0 - kBceClamp) continue;
        gp[i] += g[0] * inv_n * (-t[i] / s[i] + (1.0 - t[i]) / (1.0 - s[i]));
      }
    });
  }
  return result;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  detail::check_shape(logits.shape() == target.shape(), "bce_with_logits",
                      "shape mismatch " + shape_str(logits.shape()) + " vs " + shape_str(target.shape()));
  const double inv_n = 1.0 / static_cast<double>(logits.numel());
  auto r = logits.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    acc += std::max(r[i], 0.0) - r[i] * t[i] + std::log1p(std::exp(-std::abs(r[i])));
  }
  Tensor result = detail::make_result({1}, {acc * inv_n});
  if (detail::needs_grad({&logits})) {
    detail::record("bce_with_logits", {logits}, result, [logits, target, inv_n](std::span<const double> g) {
      auto gr = detail::grad_of(logits);
      auto r = logits.data(), t = target.data();
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double s = r[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-r[i])) : std::exp(r[i]) / (1.0 + std::exp(r[i]));
        gr[i] += g[0] * inv_n * (s - t[i]);
      }
    });
  }
  return result;
}

}  // namespace racdnn
