#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "dsgc/autodiff.hpp"

namespace dsgc::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

/// Adam with decoupled weight decay:
///   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
class Adam {
public:
  Adam(std::vector<Tensor> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      if (!p.requires_grad()) throw ContractError("Adam: parameter is not trainable");
      state_.first_moment.emplace_back(p.rows(), p.cols());
      state_.second_moment.emplace_back(p.rows(), p.cols());
    }
  }

  void step() {
    if (params_.empty()) return;
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(options_.beta1, t);
    const double bc2 = 1.0 - std::pow(options_.beta2, t);
    const double lr = options_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Matrix& value = params_[k].mutable_value();
      const Matrix& grad = params_[k].grad();
      Matrix& m = state_.first_moment[k];
      Matrix& v = state_.second_moment[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        value[i] -= lr * options_.weight_decay * value[i];
        value[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace dsgc::ad
