#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

namespace racdnn {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kBetaSquared = 0.3;

struct PrPoint {
  double precision = 1.0;
  double recall = 1.0;
};
using PrCurve = std::array<PrPoint, kThresholds>;

// round(255 * s); s must lie in [0, 1].
int quantize(double s);

/// Precision/recall at thresholds 0..255 over the quantized prediction; a
/// pixel is positive at t when quantize(pred) >= t. Empty predicted or
/// groundtruth sets count as precision or recall 1.
PrCurve pr_curve(std::span<const double> pred, std::span<const double> gt);

double f_measure(double precision, double recall, double beta_squared = kBetaSquared);
double max_f_measure(const PrCurve& curve, double beta_squared = kBetaSquared);
double mae(std::span<const double> pred, std::span<const double> gt);

struct MetricsReport {
  PrCurve pr{};
  double max_f = 0.0;
  double mae = 0.0;
};

MetricsReport evaluate(std::span<const double> pred, std::span<const double> gt);

enum class FAggregation {
  kMeanCurve,     // max F of the dataset-mean PR curve
  kMeanOfMaxima,  // mean over images of per-image max F
};

// Accumulates per-image curves and MAE over a dataset.
class DatasetMetrics {
 public:
  void add(std::span<const double> pred, std::span<const double> gt);
  void add(const MetricsReport& image);

  std::size_t count() const { return count_; }
  MetricsReport report(FAggregation aggregation = FAggregation::kMeanCurve) const;

 private:
  std::array<double, kThresholds> precision_sum_{};
  std::array<double, kThresholds> recall_sum_{};
  double max_f_sum_ = 0.0;
  double mae_sum_ = 0.0;
  std::size_t count_ = 0;
};

// "threshold,precision,recall" header and 256 rows, six decimals.
void write_pr_csv(std::ostream& out, const PrCurve& curve);

}  // namespace racdnn
