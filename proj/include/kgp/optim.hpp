#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/tensor.hpp"

namespace kgp {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  nlohmann::json to_json() const {
    return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}, {"weight_decay", weight_decay}};
  }
  static AdamWOptions from_json(const nlohmann::json& j) {
    AdamWOptions o;
    o.lr = j.value("lr", o.lr);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
    o.weight_decay = j.value("weight_decay", o.weight_decay);
    return o;
  }
};

/// AdamW with decoupled weight decay: w <- w - lr*wd*w, then the
/// bias-corrected Adam step. Moments are kept per trainable parameter.
template <class Real>
class AdamW {
 public:
  AdamW(std::vector<Parameter<Real>*> params, AdamWOptions opt = {}) : opt_(opt) {
    for (auto* p : params) {
      if (!p->trainable) continue;
      params_.push_back(p);
      m_.emplace_back(p->value.rows, p->value.cols);
      v_.emplace_back(p->value.rows, p->value.cols);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    for (auto* p : params_) {
      if (!p->grad.same_shape(p->value)) throw Error(Errc::ShapeMismatch, "gradient shape for " + p->name);
      for (auto g : p->grad.data)
        if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, p->name);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = params_[k]->value.data;
      const auto& g = params_[k]->grad.data;
      auto& m = m_[k].data;
      auto& v = v_[k].data;
      for (std::size_t i = 0; i < w.size(); ++i) {
        double wi = w[i];
        wi -= opt_.lr * opt_.weight_decay * wi;
        const double gi = g[i];
        m[i] = static_cast<Real>(opt_.beta1 * m[i] + (1 - opt_.beta1) * gi);
        v[i] = static_cast<Real>(opt_.beta2 * v[i] + (1 - opt_.beta2) * gi * gi);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        wi -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
        w[i] = static_cast<Real>(wi);
      }
#ifndef NDEBUG
      for (auto x : w)
        if (!std::isfinite(x)) throw Error(Errc::NonFiniteGradient, "parameter " + params_[k]->name + " became non-finite");
#endif
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamWOptions& options() const { return opt_; }

 private:
  AdamWOptions opt_;
  std::vector<Parameter<Real>*> params_;
  std::vector<Matrix<Real>> m_;
  std::vector<Matrix<Real>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace kgp
