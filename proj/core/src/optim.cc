#include "racdnn/optim.h"

#include <algorithm>
#include <cmath>

namespace racdnn {

namespace {

std::vector<std::vector<double>> zeros_like(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.numel(), 0.0);
  return out;
}

void check_lr(double lr) {
  if (!(lr > 0.0)) throw Error(ErrorKind::kInvalidArgument, "learning rate must be positive");
}

}  // namespace

void clip_gradients(std::span<double> grads, double lo, double hi) {
  for (double& g : grads) g = std::clamp(g, lo, hi);
}

void clip_gradients(std::span<Tensor> params, double lo, double hi) {
  for (Tensor& p : params) {
    if (p.has_grad()) clip_gradients(p.mutable_grad(), lo, hi);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  check_lr(config_.lr);
  state_.first = zeros_like(params_);
  state_.second = zeros_like(params_);
  state_.lr = config_.lr;
}

void Adam::step() {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state_.first[i];
    auto& v = state_.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1, v_hat = v[j] / c2;
      w[j] -= state_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

RmsProp::RmsProp(std::vector<Tensor> params, RmsPropConfig config) : params_(std::move(params)), config_(config) {
  check_lr(config_.lr);
  state_.second = zeros_like(params_);
  state_.lr = config_.lr;
}

void RmsProp::step() {
  ++state_.step;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& ms = state_.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      ms[j] = config_.decay * ms[j] + (1.0 - config_.decay) * g[j] * g[j];
      w[j] -= state_.lr * g[j] / std::sqrt(ms[j] + config_.epsilon);
    }
  }
}

void RmsProp::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double PlateauSchedule::update(double validation_loss, double lr) {
  if (!has_best || validation_loss < best) {
    best = validation_loss;
    has_best = true;
    bad_epochs = 0;
    return lr;
  }
  if (++bad_epochs >= patience) {
    bad_epochs = 0;
    return lr * factor;
  }
  return lr;
}

}  // namespace racdnn
