#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"
#include "kgp/tensor.hpp"

namespace kgp::nn {

/// Owns parameters with stable addresses, in registration order.
template <class Real>
class ParamStore {
 public:
  Parameter<Real>& add(const std::string& name, std::size_t rows, std::size_t cols, bool trainable = true) {
    if (index_.count(name)) throw Error(Errc::Format, "duplicate parameter name " + name);
    auto p = std::make_unique<Parameter<Real>>();
    p->name = name;
    p->value = Matrix<Real>(rows, cols);
    p->trainable = trainable;
    auto& ref = *p;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return ref;
  }

  Parameter<Real>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<Real>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Parameter<Real>& at(const std::string& name) {
    auto* p = find(name);
    if (!p) throw Error(Errc::Format, "no parameter named " + name);
    return *p;
  }

  std::vector<Parameter<Real>*> all() {
    std::vector<Parameter<Real>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<Real>*> all() const {
    std::vector<const Parameter<Real>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<Parameter<Real>*> trainable() {
    std::vector<Parameter<Real>*> out;
    for (auto& p : params_)
      if (p->trainable) out.push_back(p.get());
    return out;
  }

  std::size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class Real>
void glorot_uniform(Matrix<Real>& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : w.data) v = static_cast<Real>(dist(rng));
}

/// Train/eval switch plus the stream used by dropout.
struct Mode {
  bool train = false;
  Rng* rng = nullptr;
};

template <class Real>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<Real>& store, const std::string& name, std::size_t in, std::size_t out, Rng& init, bool bias = true)
      : in_(in), out_(out) {
    weight_ = &store.add(name + ".weight", in, out);
    glorot_uniform(weight_->value, init);
    if (bias) bias_ = &store.add(name + ".bias", 1, out);
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x) const {
    if (x.cols() != in_) throw Error(Errc::WidthMismatch, weight_->name + " expects width " + std::to_string(in_) + ", got " + std::to_string(x.cols()));
    auto y = ops::matmul(x, t.parameter(*weight_));
    return bias_ ? ops::add_bias(y, t.parameter(*bias_)) : y;
  }

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Parameter<Real>* weight_ = nullptr;
  Parameter<Real>* bias_ = nullptr;
};

template <class Real>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore<Real>& store, const std::string& name, std::size_t width, ops::BatchNormOptions opt)
      : opt_(opt) {
    gamma_ = &store.add(name + ".gamma", 1, width);
    gamma_->value.fill(Real(1));
    beta_ = &store.add(name + ".beta", 1, width);
    mean_ = &store.add(name + ".running_mean", 1, width, false);
    var_ = &store.add(name + ".running_var", 1, width, false);
    var_->value.fill(Real(1));
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x, bool train) const {
    return ops::batch_norm(x, t.parameter(*gamma_), t.parameter(*beta_), *mean_, *var_, train, opt_);
  }

 private:
  ops::BatchNormOptions opt_;
  Parameter<Real>* gamma_ = nullptr;
  Parameter<Real>* beta_ = nullptr;
  Parameter<Real>* mean_ = nullptr;
  Parameter<Real>* var_ = nullptr;
};

struct MlpOptions {
  bool batch_norm = false;
  double dropout = 0.0;
  ops::BatchNormOptions bn;
};

/// widths = {in, h1, ..., out}. Hidden layers: Linear -> [BatchNorm] -> ReLU ->
/// [Dropout]. The output layer is linear.
template <class Real>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore<Real>& store, const std::string& name, const std::vector<std::size_t>& widths, MlpOptions opt, Rng& init)
      : opt_(opt) {
    if (widths.size() < 2) throw Error(Errc::WidthMismatch, name + ": an MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      auto lname = name + ".fc" + std::to_string(i);
      layers_.emplace_back(store, lname, widths[i], widths[i + 1], init);
      bool hidden = i + 2 < widths.size();
      if (hidden && opt.batch_norm) norms_.emplace_back(store, name + ".bn" + std::to_string(i), widths[i + 1], opt.bn);
    }
  }

  Var<Real> operator()(Tape<Real>& t, Var<Real> x, const Mode& mode) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](t, x);
      if (i + 1 == layers_.size()) break;
      if (opt_.batch_norm) x = norms_[i](t, x, mode.train);
      x = ops::relu(x);
      x = ops::dropout(x, opt_.dropout, mode.rng, mode.train);
    }
    return x;
  }

  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }

 private:
  MlpOptions opt_;
  std::vector<Linear<Real>> layers_;
  std::vector<BatchNorm<Real>> norms_;
};

}  // namespace kgp::nn
