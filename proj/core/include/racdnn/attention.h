#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "racdnn/tensor.h"

/// Spatial-transformer attention restricted to isotropic scale plus
/// translation.
///
/// Coordinates are normalized to [-1, 1] per axis, with -1 at the centre of
/// the first pixel and +1 at the centre of the last. A transform maps
/// coordinates of the output lattice to sampling coordinates in the source.
namespace racdnn {

struct AffineAttention {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

// Row-major 2x3 matrix; the homogeneous row (0, 0, 1) is implicit.
using Transform = std::array<double, 6>;

struct ScaleRange {
  double min = 0.2;
  double max = 1.0;
};

Transform make_transform(const AffineAttention& p);
Transform invert_transform(const AffineAttention& p);
// Homogeneous product a * b.
Transform compose(const Transform& a, const Transform& b);
Transform identity_transform();

// (x, y) -> transform * (x, y, 1).
std::array<double, 2> apply(const Transform& t, double x, double y);

// Normalized coordinate of pixel `index` on an axis of `size` pixels.
double normalized_coord(std::size_t index, std::size_t size);

// Maps an unconstrained regressor output (u_s, u_x, u_y) to a window that
// lies inside the image:
//   a_s  = min + (max - min) * sigmoid(u_s)
//   a_tx = (1 - a_s) * tanh(u_x),  a_ty = (1 - a_s) * tanh(u_y)
AffineAttention constrain(double u_s, double u_x, double u_y, const ScaleRange& range = {});

// Throws kInvalidScale for a_s <= 0.
void validate(const AffineAttention& p);
// Both window-inside-image conditions, with `tol` slack for rounding.
bool window_inside_image(const AffineAttention& p, double tol = 1e-12);

// True when canvas pixel (row, col) of an h x w canvas lies in the window
// that st_inverse writes for `p`.
bool window_contains(const AffineAttention& p, std::size_t row, std::size_t col, std::size_t h, std::size_t w);

struct SamplingGrid {
  Tensor coords;  // [H', W', 2] holding (x, y)
};

SamplingGrid generate_grid(const Transform& transform, std::size_t out_h, std::size_t out_w);

// source [C,H,W]. Taps outside the source contribute zero.
Tensor bilinear_sample(const Tensor& source, const SamplingGrid& grid);

Tensor st(const Tensor& image, const AffineAttention& p, std::size_t out_h, std::size_t out_w);
// Places `patch` back into window p of an out_h x out_w canvas; every canvas
// pixel outside the window is exactly zero.
Tensor st_inverse(const Tensor& patch, const AffineAttention& p, std::size_t out_h, std::size_t out_w);

// ---- Batched, differentiable forms used inside networks -------------------

enum class Direction { kForward, kInverse };

enum class SampleMode {
  kZeroFill,    // out-of-range taps read as zero
  kWindowOnly,  // additionally, samples with coordinates outside [-1,1] are zero
};

// raw [B,3] -> attention parameters [B,3] holding (a_s, a_tx, a_ty).
Tensor constrain_attention(const Tensor& raw, const ScaleRange& range = {});

// params [B,3] -> transforms [B,2,3].
Tensor attention_transform(const Tensor& params, Direction dir);

// transforms [B,2,3] -> grid [B,H',W',2].
Tensor affine_grid(const Tensor& transforms, std::size_t out_h, std::size_t out_w);

// source [B,C,H,W], grid [B,H',W',2] -> [B,C,H',W'].
Tensor grid_sample(const Tensor& source, const Tensor& grid, SampleMode mode = SampleMode::kZeroFill);

Tensor st(const Tensor& images, const Tensor& params, std::size_t out_h, std::size_t out_w);
Tensor st_inverse(const Tensor& patches, const Tensor& params, std::size_t out_h, std::size_t out_w);

// Reads row `b` of a [B,3] parameter tensor.
AffineAttention attention_at(const Tensor& params, std::size_t b);
Tensor attention_tensor(const std::vector<AffineAttention>& params);

}  // namespace racdnn
