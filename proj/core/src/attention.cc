#include "racdnn/attention.h"

#include <algorithm>
#include <cmath>

#include "racdnn/ops.h"

namespace racdnn {

namespace {

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Pixel-space position of a normalized coordinate. Positions within 1e-9 of a
// pixel centre are snapped so that lattice-aligned grids reproduce the
// source exactly.
double to_pixel(double coord, std::size_t size) {
  const double px = (coord + 1.0) * 0.5 * static_cast<double>(size - 1);
  const double r = std::round(px);
  return std::abs(px - r) < 1e-9 ? r : px;
}

bool outside_window(double x, double y) { return std::abs(x) > 1.0 || std::abs(y) > 1.0; }

struct Tap {
  std::ptrdiff_t x0, y0;
  double wx, wy;
};

Tap make_tap(double x, double y, std::size_t h, std::size_t w) {
  // Far-away coordinates only ever produce out-of-range taps; clamp them so
  // the integer conversion stays defined.
  const double px = std::clamp(to_pixel(x, w), -2.0, static_cast<double>(w) + 1.0);
  const double py = std::clamp(to_pixel(y, h), -2.0, static_cast<double>(h) + 1.0);
  const double fx = std::floor(px), fy = std::floor(py);
  return {static_cast<std::ptrdiff_t>(fx), static_cast<std::ptrdiff_t>(fy), px - fx, py - fy};
}

}  // namespace

Transform make_transform(const AffineAttention& p) {
  validate(p);
  return {p.scale, 0.0, p.tx, 0.0, p.scale, p.ty};
}

Transform invert_transform(const AffineAttention& p) {
  validate(p);
  const double inv = 1.0 / p.scale;
  return {inv, 0.0, -p.tx / p.scale, 0.0, inv, -p.ty / p.scale};
}

Transform compose(const Transform& a, const Transform& b) {
  return {a[0] * b[0] + a[1] * b[3],        a[0] * b[1] + a[1] * b[4],
          a[0] * b[2] + a[1] * b[5] + a[2], a[3] * b[0] + a[4] * b[3],
          a[3] * b[1] + a[4] * b[4],        a[3] * b[2] + a[4] * b[5] + a[5]};
}

Transform identity_transform() { return {1.0, 0.0, 0.0, 0.0, 1.0, 0.0}; }

std::array<double, 2> apply(const Transform& t, double x, double y) {
  return {t[0] * x + t[1] * y + t[2], t[3] * x + t[4] * y + t[5]};
}

double normalized_coord(std::size_t index, std::size_t size) {
  if (size <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(size - 1);
}

AffineAttention constrain(double u_s, double u_x, double u_y, const ScaleRange& range) {
  AffineAttention p;
  p.scale = range.min + (range.max - range.min) * sigmoid_scalar(u_s);
  p.tx = (1.0 - p.scale) * std::tanh(u_x);
  p.ty = (1.0 - p.scale) * std::tanh(u_y);
  return p;
}

void validate(const AffineAttention& p) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) {
    throw Error(ErrorKind::kInvalidScale, "attention scale must be positive, got " + std::to_string(p.scale));
  }
}

bool window_inside_image(const AffineAttention& p, double tol) {
  return p.scale > 0.0 && std::abs(p.tx) + p.scale <= 1.0 + tol && std::abs(p.ty) + p.scale <= 1.0 + tol;
}

bool window_contains(const AffineAttention& p, std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
  const auto [x, y] = apply(invert_transform(p), normalized_coord(col, w), normalized_coord(row, h));
  return !outside_window(x, y);
}

SamplingGrid generate_grid(const Transform& transform, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw Error(ErrorKind::kInvalidShape, "grid size must be positive");
  Tensor t = Tensor::from({1, 2, 3}, std::vector<double>(transform.begin(), transform.end()));
  NoGradGuard no_grad;
  return {reshape(affine_grid(t, out_h, out_w), {out_h, out_w, 2})};
}

Tensor bilinear_sample(const Tensor& source, const SamplingGrid& grid) {
  detail::check_shape(source.rank() == 3, "bilinear_sample", "source must be [C,H,W]");
  detail::check_shape(grid.coords.rank() == 3 && grid.coords.dim(2) == 2, "bilinear_sample", "grid must be [H',W',2]");
  const std::size_t c = source.dim(0), oh = grid.coords.dim(0), ow = grid.coords.dim(1);
  Tensor src = reshape(source, {1, c, source.dim(1), source.dim(2)});
  Tensor g = reshape(grid.coords, {1, oh, ow, 2});
  return reshape(grid_sample(src, g, SampleMode::kZeroFill), {c, oh, ow});
}

namespace {

Tensor single_attention(const AffineAttention& p, std::size_t batch) {
  validate(p);
  return attention_tensor(std::vector<AffineAttention>(batch, p));
}

Tensor sample_unbatched(const Tensor& input, const AffineAttention& p, std::size_t out_h, std::size_t out_w,
                        bool inverse) {
  if (input.rank() == 3) {
    Tensor batched = reshape(input, {1, input.dim(0), input.dim(1), input.dim(2)});
    Tensor params = single_attention(p, 1);
    Tensor out = inverse ? st_inverse(batched, params, out_h, out_w) : st(batched, params, out_h, out_w);
    return reshape(out, {input.dim(0), out_h, out_w});
  }
  detail::check_shape(input.rank() == 4, inverse ? "st_inverse" : "st", "input must be [C,H,W] or [B,C,H,W]");
  Tensor params = single_attention(p, input.dim(0));
  return inverse ? st_inverse(input, params, out_h, out_w) : st(input, params, out_h, out_w);
}

}  // namespace

Tensor st(const Tensor& image, const AffineAttention& p, std::size_t out_h, std::size_t out_w) {
  return sample_unbatched(image, p, out_h, out_w, false);
}

Tensor st_inverse(const Tensor& patch, const AffineAttention& p, std::size_t out_h, std::size_t out_w) {
  return sample_unbatched(patch, p, out_h, out_w, true);
}

Tensor constrain_attention(const Tensor& raw, const ScaleRange& range) {
  detail::check_shape(raw.rank() == 2 && raw.dim(1) == 3, "constrain_attention", "raw must be [B,3]");
  const std::size_t batch = raw.dim(0);
  auto u = raw.data();
  std::vector<double> out(batch * 3);
  for (std::size_t b = 0; b < batch; ++b) {
    const AffineAttention p = constrain(u[b * 3], u[b * 3 + 1], u[b * 3 + 2], range);
    out[b * 3] = p.scale;
    out[b * 3 + 1] = p.tx;
    out[b * 3 + 2] = p.ty;
  }
  Tensor result = detail::make_result({batch, 3}, std::move(out));
  if (detail::needs_grad({&raw})) {
    detail::record("constrain_attention", {raw}, result, [raw, range, batch](std::span<const double> g) {
      auto gu = detail::grad_of(raw);
      auto u = raw.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const double sig = sigmoid_scalar(u[b * 3]);
        const double s = range.min + (range.max - range.min) * sig;
        const double ds_du = (range.max - range.min) * sig * (1.0 - sig);
        const double th_x = std::tanh(u[b * 3 + 1]), th_y = std::tanh(u[b * 3 + 2]);
        const double gs = g[b * 3], gx = g[b * 3 + 1], gy = g[b * 3 + 2];
        gu[b * 3] += ds_du * (gs - gx * th_x - gy * th_y);
        gu[b * 3 + 1] += gx * (1.0 - s) * (1.0 - th_x * th_x);
        gu[b * 3 + 2] += gy * (1.0 - s) * (1.0 - th_y * th_y);
      }
    });
  }
  return result;
}

Tensor attention_transform(const Tensor& params, Direction dir) {
  detail::check_shape(params.rank() == 2 && params.dim(1) == 3, "attention_transform", "params must be [B,3]");
  const std::size_t batch = params.dim(0);
  std::vector<double> out(batch * 6);
  for (std::size_t b = 0; b < batch; ++b) {
    const AffineAttention p = attention_at(params, b);
    const Transform t = dir == Direction::kForward ? make_transform(p) : invert_transform(p);
    std::copy(t.begin(), t.end(), out.begin() + b * 6);
  }
  Tensor result = detail::make_result({batch, 2, 3}, std::move(out));
  if (detail::needs_grad({&params})) {
    detail::record("attention_transform", {params}, result, [params, dir, batch](std::span<const double> g) {
      auto gp = detail::grad_of(params);
      auto v = params.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const double* gt = g.data() + b * 6;
        if (dir == Direction::kForward) {
          gp[b * 3] += gt[0] + gt[4];
          gp[b * 3 + 1] += gt[2];
          gp[b * 3 + 2] += gt[5];
        } else {
          const double s = v[b * 3], tx = v[b * 3 + 1], ty = v[b * 3 + 2];
          const double inv2 = 1.0 / (s * s);
          gp[b * 3] += -(gt[0] + gt[4]) * inv2 + (gt[2] * tx + gt[5] * ty) * inv2;
          gp[b * 3 + 1] += -gt[2] / s;
          gp[b * 3 + 2] += -gt[5] / s;
        }
      }
    });
  }
  return result;
}

Tensor affine_grid(const Tensor& transforms, std::size_t out_h, std::size_t out_w) {
  detail::check_shape(transforms.rank() == 3 && transforms.dim(1) == 2 && transforms.dim(2) == 3, "affine_grid",
                      "transforms must be [B,2,3]");
  const std::size_t batch = transforms.dim(0);
  std::vector<double> out(batch * out_h * out_w * 2);
  auto tv = transforms.data();
  for (std::size_t b = 0; b < batch; ++b) {
    Transform t;
    std::copy(tv.begin() + b * 6, tv.begin() + b * 6 + 6, t.begin());
    for (std::size_t i = 0; i < out_h; ++i) {
      const double cy = normalized_coord(i, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto xy = apply(t, normalized_coord(j, out_w), cy);
        const std::size_t o = ((b * out_h + i) * out_w + j) * 2;
        out[o] = xy[0];
        out[o + 1] = xy[1];
      }
    }
  }
  Tensor result = detail::make_result({batch, out_h, out_w, 2}, std::move(out));
  if (detail::needs_grad({&transforms})) {
    detail::record("affine_grid", {transforms}, result, [transforms, batch, out_h, out_w](std::span<const double> g) {
      auto gt = detail::grad_of(transforms);
      for (std::size_t b = 0; b < batch; ++b) {
        double* d = gt.data() + b * 6;
        for (std::size_t i = 0; i < out_h; ++i) {
          const double cy = normalized_coord(i, out_h);
          for (std::size_t j = 0; j < out_w; ++j) {
            const double cx = normalized_coord(j, out_w);
            const std::size_t o = ((b * out_h + i) * out_w + j) * 2;
            d[0] += g[o] * cx;
            d[1] += g[o] * cy;
            d[2] += g[o];
            d[3] += g[o + 1] * cx;
            d[4] += g[o + 1] * cy;
            d[5] += g[o + 1];
          }
        }
      }
    });
  }
  return result;
}

Tensor grid_sample(const Tensor& source, const Tensor& grid, SampleMode mode) {
  detail::check_shape(source.rank() == 4, "grid_sample", "source must be [B,C,H,W], got " + shape_str(source.shape()));
  detail::check_shape(grid.rank() == 4 && grid.dim(3) == 2 && grid.dim(0) == source.dim(0), "grid_sample",
                      "grid must be [B,H',W',2] matching the source batch");
  const std::size_t batch = source.dim(0), channels = source.dim(1), h = source.dim(2), w = source.dim(3);
  const std::size_t oh = grid.dim(1), ow = grid.dim(2);
  const std::size_t plane = h * w, oplane = oh * ow;
  auto src = source.data();
  auto gv = grid.data();
  for (double v : gv) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "grid_sample: non-finite grid coordinate");
  }

  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  std::vector<double> out(batch * channels * oplane, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < oplane; ++o) {
      const double x = gv[(b * oplane + o) * 2], y = gv[(b * oplane + o) * 2 + 1];
      if (mode == SampleMode::kWindowOnly && outside_window(x, y)) continue;
      const Tap t = make_tap(x, y, h, w);
      const bool x0_ok = t.x0 >= 0 && t.x0 < ww, x1_ok = t.x0 + 1 >= 0 && t.x0 + 1 < ww;
      const bool y0_ok = t.y0 >= 0 && t.y0 < hh, y1_ok = t.y0 + 1 >= 0 && t.y0 + 1 < hh;
      if (!((x0_ok || x1_ok) && (y0_ok || y1_ok))) continue;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* s = src.data() + (b * channels + c) * plane;
        double acc = 0.0;
        if (y0_ok) {
          const double* row = s + t.y0 * ww;
          if (x0_ok) acc += (1.0 - t.wy) * (1.0 - t.wx) * row[t.x0];
          if (x1_ok && t.wx != 0.0) acc += (1.0 - t.wy) * t.wx * row[t.x0 + 1];
        }
        if (y1_ok && t.wy != 0.0) {
          const double* row = s + (t.y0 + 1) * ww;
          if (x0_ok) acc += t.wy * (1.0 - t.wx) * row[t.x0];
          if (x1_ok && t.wx != 0.0) acc += t.wy * t.wx * row[t.x0 + 1];
        }
        out[(b * channels + c) * oplane + o] = acc;
      }
    }
  }

  Tensor result = detail::make_result({batch, channels, oh, ow}, std::move(out));
  if (detail::needs_grad({&source, &grid})) {
    detail::record(
        "grid_sample", {source, grid}, result,
        [source, grid, mode, batch, channels, h, w, oplane, plane, hh, ww](std::span<const double> g) {
          auto src = source.data();
          auto gv = grid.data();
          double* gs = source.requires_grad() ? detail::grad_of(source).data() : nullptr;
          double* gg = grid.requires_grad() ? detail::grad_of(grid).data() : nullptr;
          const double sx = 0.5 * static_cast<double>(w - 1), sy = 0.5 * static_cast<double>(h - 1);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < oplane; ++o) {
              const double x = gv[(b * oplane + o) * 2], y = gv[(b * oplane + o) * 2 + 1];
              if (mode == SampleMode::kWindowOnly && outside_window(x, y)) continue;
              const Tap t = make_tap(x, y, h, w);
              const bool x0_ok = t.x0 >= 0 && t.x0 < ww, x1_ok = t.x0 + 1 >= 0 && t.x0 + 1 < ww;
              const bool y0_ok = t.y0 >= 0 && t.y0 < hh, y1_ok = t.y0 + 1 >= 0 && t.y0 + 1 < hh;
              if (!((x0_ok || x1_ok) && (y0_ok || y1_ok))) continue;
              double dx = 0.0, dy = 0.0;
              for (std::size_t c = 0; c < channels; ++c) {
                const double go = g[(b * channels + c) * oplane + o];
                if (go == 0.0) continue;
                const std::size_t base = (b * channels + c) * plane;
                const double v00 = y0_ok && x0_ok ? src[base + t.y0 * ww + t.x0] : 0.0;
                const double v01 = y0_ok && x1_ok ? src[base + t.y0 * ww + t.x0 + 1] : 0.0;
                const double v10 = y1_ok && x0_ok ? src[base + (t.y0 + 1) * ww + t.x0] : 0.0;
                const double v11 = y1_ok && x1_ok ? src[base + (t.y0 + 1) * ww + t.x0 + 1] : 0.0;
                if (gs != nullptr) {
                  if (y0_ok && x0_ok) gs[base + t.y0 * ww + t.x0] += go * (1.0 - t.wy) * (1.0 - t.wx);
                  if (y0_ok && x1_ok) gs[base + t.y0 * ww + t.x0 + 1] += go * (1.0 - t.wy) * t.wx;
                  if (y1_ok && x0_ok) gs[base + (t.y0 + 1) * ww + t.x0] += go * t.wy * (1.0 - t.wx);
                  if (y1_ok && x1_ok) gs[base + (t.y0 + 1) * ww + t.x0 + 1] += go * t.wy * t.wx;
                }
                dx += go * ((1.0 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                dy += go * ((1.0 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
              }
              if (gg != nullptr) {
                gg[(b * oplane + o) * 2] += dx * sx;
                gg[(b * oplane + o) * 2 + 1] += dy * sy;
              }
            }
          }
        });
  }
  return result;
}

Tensor st(const Tensor& images, const Tensor& params, std::size_t out_h, std::size_t out_w) {
  Tensor grid = affine_grid(attention_transform(params, Direction::kForward), out_h, out_w);
  return grid_sample(images, grid, SampleMode::kZeroFill);
}

Tensor st_inverse(const Tensor& patches, const Tensor& params, std::size_t out_h, std::size_t out_w) {
  Tensor grid = affine_grid(attention_transform(params, Direction::kInverse), out_h, out_w);
  return grid_sample(patches, grid, SampleMode::kWindowOnly);
}

AffineAttention attention_at(const Tensor& params, std::size_t b) {
  detail::check_shape(params.rank() == 2 && params.dim(1) == 3 && b < params.dim(0), "attention_at",
                      "params must be [B,3] with b < B");
  auto v = params.data();
  return {v[b * 3], v[b * 3 + 1], v[b * 3 + 2]};
}

Tensor attention_tensor(const std::vector<AffineAttention>& params) {
  if (params.empty()) throw Error(ErrorKind::kInvalidShape, "attention_tensor: empty batch");
  std::vector<double> v;
  v.reserve(params.size() * 3);
  for (const auto& p : params) {
    v.push_back(p.scale);
    v.push_back(p.tx);
    v.push_back(p.ty);
  }
  return Tensor::from({params.size(), 3}, std::move(v));
}

}  // namespace racdnn
