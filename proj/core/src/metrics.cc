#include "racdnn/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "racdnn/error.h"

namespace racdnn {

namespace {

void check_sizes(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::kInvalidShape, "prediction has " + std::to_string(pred.size()) +
                                              " pixels, groundtruth has " + std::to_string(gt.size()));
  }
  if (pred.empty()) throw Error(ErrorKind::kInvalidShape, "empty saliency map");
}

}  // namespace

int quantize(double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "saliency value " + std::to_string(s) + " outside [0,1]");
  }
  return static_cast<int>(std::lround(255.0 * s));
}

PrCurve pr_curve(std::span<const double> pred, std::span<const double> gt) {
  check_sizes(pred, gt);
  // Histograms of quantized levels split by groundtruth label.
  std::array<std::uint64_t, kThresholds> pos{}, neg{};
  std::uint64_t total_pos = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int q = quantize(pred[i]);
    if (gt[i] == 1.0) {
      ++pos[q];
      ++total_pos;
    } else if (gt[i] == 0.0) {
      ++neg[q];
    } else {
      throw Error(ErrorKind::kInvalidGroundTruth, "groundtruth value " + std::to_string(gt[i]) + " is not 0 or 1");
    }
  }
  PrCurve curve;
  std::uint64_t tp = 0, fp = 0;
  for (int t = static_cast<int>(kThresholds) - 1; t >= 0; --t) {
    tp += pos[t];
    fp += neg[t];
    const std::uint64_t fn = total_pos - tp;
    PrPoint& p = curve[t];
    p.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  return curve;
}

double f_measure(double precision, double recall, double beta_squared) {
  const double denom = beta_squared * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_squared) * precision * recall / denom;
}

double max_f_measure(const PrCurve& curve, double beta_squared) {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, f_measure(p.precision, p.recall, beta_squared));
  return best;
}

double mae(std::span<const double> pred, std::span<const double> gt) {
  check_sizes(pred, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - gt[i]);
  return sum / static_cast<double>(pred.size());
}

MetricsReport evaluate(std::span<const double> pred, std::span<const double> gt) {
  MetricsReport r;
  r.pr = pr_curve(pred, gt);
  r.max_f = max_f_measure(r.pr);
  r.mae = mae(pred, gt);
  return r;
}

void DatasetMetrics::add(std::span<const double> pred, std::span<const double> gt) { add(evaluate(pred, gt)); }

void DatasetMetrics::add(const MetricsReport& image) {
  for (std::size_t t = 0; t < kThresholds; ++t) {
    precision_sum_[t] += image.pr[t].precision;
    recall_sum_[t] += image.pr[t].recall;
  }
  max_f_sum_ += image.max_f;
  mae_sum_ += image.mae;
  ++count_;
}

MetricsReport DatasetMetrics::report(FAggregation aggregation) const {
  if (count_ == 0) throw Error(ErrorKind::kInvalidArgument, "no images were evaluated");
  const double n = static_cast<double>(count_);
  MetricsReport r;
  for (std::size_t t = 0; t < kThresholds; ++t) {
    r.pr[t].precision = precision_sum_[t] / n;
    r.pr[t].recall = recall_sum_[t] / n;
  }
  r.max_f = aggregation == FAggregation::kMeanCurve ? max_f_measure(r.pr) : max_f_sum_ / n;
  r.mae = mae_sum_ / n;
  return r;
}

void write_pr_csv(std::ostream& out, const PrCurve& curve) {
  out << "threshold,precision,recall\n";
  char line[64];
  for (std::size_t t = 0; t < kThresholds; ++t) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", t, curve[t].precision, curve[t].recall);
    out << line;
  }
}

}  // namespace racdnn
