#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace appgen {

// Parameter structs expose `template <class Self, class F> static void
// visit(Self&, F&&)` which calls F on every tensor in a fixed order. The
// helpers below turn that into flat views for optimizers, serialization and
// finite-difference checks.

using TensorView = Eigen::Map<Eigen::VectorXd>;
using ConstTensorView = Eigen::Map<const Eigen::VectorXd>;

template <class Params>
std::vector<TensorView> tensor_views(Params& params) {
  std::vector<TensorView> out;
  Params::visit(params, [&](auto& t) { out.emplace_back(t.data(), t.size()); });
  return out;
}

template <class Params>
std::vector<ConstTensorView> tensor_views(const Params& params) {
  std::vector<ConstTensorView> out;
  Params::visit(params, [&](const auto& t) { out.emplace_back(t.data(), t.size()); });
  return out;
}

template <class Params>
Eigen::Index parameter_count(const Params& params) {
  Eigen::Index n = 0;
  for (const auto& v : tensor_views(params)) n += v.size();
  return n;
}

template <class Params>
Eigen::VectorXd flatten(const Params& params) {
  Eigen::VectorXd out(parameter_count(params));
  Eigen::Index at = 0;
  for (const auto& v : tensor_views(params)) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

template <class Params>
void unflatten(const Eigen::VectorXd& flat, Params& params) {
  Eigen::Index at = 0;
  for (auto& v : tensor_views(params)) {
    v = flat.segment(at, v.size());
    at += v.size();
  }
}

/// Same shapes as `params`, all zero.
template <class Params>
Params zeros_like(const Params& params) {
  Params out = params;
  for (auto& v : tensor_views(out)) v.setZero();
  return out;
}

template <class Params>
void fill_uniform(Params& params, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : tensor_views(params))
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
}

template <class Params>
bool all_finite(const Params& params) {
  for (const auto& v : tensor_views(params))
    if (!v.allFinite()) return false;
  return true;
}

/// Adaptive moment estimation over a parameter struct.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  template <class Params>
  void step(Params& params, const Params& grads) {
    auto p = tensor_views(params);
    const auto g = tensor_views(grads);
    if (m_.empty()) {
      for (const auto& v : p) {
        m_.push_back(Eigen::VectorXd::Zero(v.size()));
        v_.push_back(Eigen::VectorXd::Zero(v.size()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < p.size(); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g[k];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g[k].cwiseAbs2();
      p[k].array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

}  // namespace appgen
