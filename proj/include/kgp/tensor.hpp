#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kgp/error.hpp"
#include "kgp/rng.hpp"

namespace kgp {

/// Dense row-major 2-D buffer.
template <class Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<Real> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw Error(Errc::ShapeMismatch, "buffer of " + std::to_string(data.size()) + " for " + shape_string());
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const Real& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<Real> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_string() const { return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]"; }
  void fill(Real v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> m(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = static_cast<U>(data[i]);
    return m;
  }

  bool operator==(const Matrix&) const = default;
};

template <class Real>
struct Parameter {
  std::string name;
  Matrix<Real> value;
  Matrix<Real> grad;
  bool trainable = true;  // false for running statistics

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Matrix<Real>(value.rows, value.cols);
    grad.fill(Real(0));
  }
};

template <class Real>
class Tape;

/// Handle to a value recorded on a tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::uint32_t id = 0;

  const Matrix<Real>& value() const { return tape->value(*this); }
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

/// Linear record of operations. Inputs of every record precede it, so the
/// reverse sweep is a walk over the records in reverse creation order.
template <class Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<Real>& out_grad)>;

  Var<Real> constant(Matrix<Real> m) {
    nodes_.push_back(Node{std::move(m), {}, nullptr, false, nullptr});
    return handle(nodes_.size() - 1);
  }

  Var<Real> parameter(Parameter<Real>& p) {
    nodes_.push_back(Node{{}, {}, &p, p.trainable, nullptr});
    return handle(nodes_.size() - 1);
  }

  Var<Real> record(Matrix<Real> value, std::initializer_list<Var<Real>> inputs, Backward fn) {
    return record(std::move(value), std::span<const Var<Real>>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var<Real> record(Matrix<Real> value, std::span<const Var<Real>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs, needs ? std::move(fn) : nullptr});
    return handle(nodes_.size() - 1);
  }

  const Matrix<Real>& value(Var<Real> v) const {
    const auto& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(Var<Real> v) const { return nodes_[v.id].needs_grad; }

  /// Gradient accumulator for `v`; parameters accumulate into Parameter::grad.
  Matrix<Real>& grad_buffer(Var<Real> v) {
    auto& n = nodes_[v.id];
    auto& g = n.param ? n.param->grad : n.grad;
    const auto& val = value(v);
    if (!g.same_shape(val)) g = Matrix<Real>(val.rows, val.cols);
    return g;
  }

  void backward(Var<Real> loss) {
    const auto& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) throw Error(Errc::ShapeMismatch, "backward needs a scalar, got " + lv.shape_string());
    if (!nodes_[loss.id].needs_grad) return;
    grad_buffer(loss).data[0] += Real(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Real> value;
    Matrix<Real> grad;
    Parameter<Real>* param;
    bool needs_grad;
    Backward backward;
  };

  Var<Real> handle(std::size_t i) { return Var<Real>{this, static_cast<std::uint32_t>(i)}; }

  std::vector<Node> nodes_;
};

namespace ops {

namespace detail {
template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
Eigen::Map<RowMat<Real>> map(Matrix<Real>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}
template <class Real>
Eigen::Map<const RowMat<Real>> map(const Matrix<Real>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}
}  // namespace detail

template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require(A.cols == B.rows, Errc::ShapeMismatch, "matmul " + A.shape_string() + " x " + B.shape_string());
  Matrix<Real> C(A.rows, B.cols);
  detail::map(C).noalias() = detail::map(A) * detail::map(B);
  return a.tape->record(std::move(C), {a, b}, [a, b](Tape<Real>& t, const Matrix<Real>& g) {
    if (t.needs_grad(a)) detail::map(t.grad_buffer(a)).noalias() += detail::map(g) * detail::map(t.value(b)).transpose();
    if (t.needs_grad(b)) detail::map(t.grad_buffer(b)).noalias() += detail::map(t.value(a)).transpose() * detail::map(g);
  });
}

/// x[n,m] + bias[1,m] broadcast over rows.
template <class Real>
Var<Real> add_bias(Var<Real> x, Var<Real> bias) {
  const auto& X = x.value();
  const auto& b = bias.value();
  detail::require(b.rows == 1 && b.cols == X.cols, Errc::ShapeMismatch, "add_bias " + X.shape_string() + " + " + b.shape_string());
  Matrix<Real> out = X;
  for (std::size_t r = 0; r < X.rows; ++r)
    for (std::size_t c = 0; c < X.cols; ++c) out(r, c) += b.data[c];
  return x.tape->record(std::move(out), {x, bias}, [x, bias](Tape<Real>& t, const Matrix<Real>& g) {
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    }
    if (t.needs_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
    }
  });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require(A.same_shape(B), Errc::ShapeMismatch, "add " + A.shape_string() + " + " + B.shape_string());
  Matrix<Real> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Real>& t, const Matrix<Real>& g) {
    for (auto v : {a, b})
      if (t.needs_grad(v)) {
        auto& gv = t.grad_buffer(v);
        for (std::size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
      }
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require(A.same_shape(B), Errc::ShapeMismatch, "mul " + A.shape_string() + " * " + B.shape_string());
  Matrix<Real> out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Real>& t, const Matrix<Real>& g) {
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      const auto& B = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buffer(b);
      const auto& A = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
    }
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real s) {
  Matrix<Real> out = a.value();
  for (auto& v : out.data) v *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape<Real>& t, const Matrix<Real>& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

template <class Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts) {
  detail::require(!parts.empty(), Errc::ShapeMismatch, "concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, Errc::ShapeMismatch, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix<Real> out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& P = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(P.row(r).begin(), P.row(r).end(), out.row(r).begin() + off);
    off += P.cols;
  }
  return parts[0].tape->record(std::move(out), std::span<const Var<Real>>(parts), [parts](Tape<Real>& t, const Matrix<Real>& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = t.value(p).cols;
      if (t.needs_grad(p)) {
        auto& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t k = 0; k < c; ++k) gp(r, k) += g(r, off + k);
      }
      off += c;
    }
  });
}

template <class Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
  detail::require(!parts.empty(), Errc::ShapeMismatch, "concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, Errc::ShapeMismatch, "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix<Real> out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& P = p.value();
    std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * cols));
    off += P.rows;
  }
  return parts[0].tape->record(std::move(out), std::span<const Var<Real>>(parts), [parts](Tape<Real>& t, const Matrix<Real>& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.needs_grad(p)) {
        auto& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
      }
      off += n;
    }
  });
}

template <class Real>
Var<Real> gather_rows(Var<Real> x, std::vector<std::uint32_t> index) {
  const auto& X = x.value();
  Matrix<Real> out(index.size(), X.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] < X.rows, Errc::ShapeMismatch, "gather_rows index out of range");
    std::copy(X.row(index[i]).begin(), X.row(index[i]).end(), out.row(i).begin());
  }
  return x.tape->record(std::move(out), {x}, [x, index = std::move(index)](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < g.cols; ++c) gx(index[i], c) += g(i, c);
  });
}

template <class Real>
Var<Real> leaky_relu(Var<Real> x, Real slope = Real(0.2)) {
  Matrix<Real> out = x.value();
  for (auto& v : out.data) v = v > 0 ? v : slope * v;
  return x.tape->record(std::move(out), {x}, [x, slope](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gx = t.grad_buffer(x);
    const auto& X = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += X.data[i] > 0 ? g.data[i] : slope * g.data[i];
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  return leaky_relu(x, Real(0));
}

/// Running statistics live in non-trainable parameters and are updated in
/// train mode with PyTorch semantics (unbiased running variance).
struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

template <class Real>
Var<Real> batch_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta, Parameter<Real>& running_mean,
                     Parameter<Real>& running_var, bool train, BatchNormOptions opt = {}) {
  const auto& X = x.value();
  const std::size_t n = X.rows, c = X.cols;
  detail::require(gamma.cols() == c && beta.cols() == c && gamma.rows() == 1 && beta.rows() == 1, Errc::ShapeMismatch,
                  "batch_norm affine shape");
  const Real eps = static_cast<Real>(opt.eps);
  Matrix<Real> xhat(n, c), out(n, c);
  std::vector<Real> inv_std(c);
  const auto& G = gamma.value();
  const auto& B = beta.value();
  if (train) {
    detail::require(n > 0, Errc::ShapeMismatch, "batch_norm on empty batch");
    for (std::size_t j = 0; j < c; ++j) {
      double mean = 0;
      for (std::size_t i = 0; i < n; ++i) mean += X(i, j);
      mean /= static_cast<double>(n);
      double var = 0;
      for (std::size_t i = 0; i < n; ++i) var += (X(i, j) - mean) * (X(i, j) - mean);
      var /= static_cast<double>(n);
      inv_std[j] = static_cast<Real>(1.0 / std::sqrt(var + opt.eps));
      for (std::size_t i = 0; i < n; ++i) xhat(i, j) = static_cast<Real>((X(i, j) - mean)) * inv_std[j];
      const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
      auto& rm = running_mean.value.data[j];
      auto& rv = running_var.value.data[j];
      rm = static_cast<Real>((1 - opt.momentum) * rm + opt.momentum * mean);
      rv = static_cast<Real>((1 - opt.momentum) * rv + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      inv_std[j] = Real(1) / std::sqrt(running_var.value.data[j] + eps);
      for (std::size_t i = 0; i < n; ++i) xhat(i, j) = (X(i, j) - running_mean.value.data[j]) * inv_std[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = G.data[j] * xhat(i, j) + B.data[j];

  return x.tape->record(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), train](Tape<Real>& t,
                                                                                                       const Matrix<Real>& g) {
    const std::size_t n = g.rows, c = g.cols;
    const auto& G = t.value(gamma);
    if (t.needs_grad(gamma) || t.needs_grad(beta)) {
      std::vector<Real> dg(c, 0), db(c, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          dg[j] += g(i, j) * xhat(i, j);
          db[j] += g(i, j);
        }
      if (t.needs_grad(gamma)) {
        auto& gg = t.grad_buffer(gamma);
        for (std::size_t j = 0; j < c; ++j) gg.data[j] += dg[j];
      }
      if (t.needs_grad(beta)) {
        auto& gb = t.grad_buffer(beta);
        for (std::size_t j = 0; j < c; ++j) gb.data[j] += db[j];
      }
    }
    if (!t.needs_grad(x)) return;
    auto& gx = t.grad_buffer(x);
    if (!train) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gx(i, j) += g(i, j) * G.data[j] * inv_std[j];
      return;
    }
    const Real rn = Real(1) / static_cast<Real>(n);
    for (std::size_t j = 0; j < c; ++j) {
      Real sum_d = 0, sum_dx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        Real d = g(i, j) * G.data[j];
        sum_d += d;
        sum_dx += d * xhat(i, j);
      }
      for (std::size_t i = 0; i < n; ++i) {
        Real d = g(i, j) * G.data[j];
        gx(i, j) += rn * inv_std[j] * (static_cast<Real>(n) * d - sum_d - xhat(i, j) * sum_dx);
      }
    }
  });
}

/// Inverted dropout; the identity outside train mode.
template <class Real>
Var<Real> dropout(Var<Real> x, double rate, Rng* rng, bool train) {
  if (!train || rate <= 0.0) return x;
  detail::require(rate < 1.0 && rng != nullptr, Errc::ParamDomain, "dropout rate must be in [0,1) with an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const Real s = static_cast<Real>(1.0 / (1.0 - rate));
  Matrix<Real> mask(x.rows(), x.cols());
  for (auto& m : mask.data) m = keep(*rng) ? s : Real(0);
  Matrix<Real> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
  return x.tape->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * mask.data[i];
  });
}

/// Mean over rows: [n, c] -> [1, c]. An empty input yields zeros.
template <class Real>
Var<Real> row_mean(Var<Real> x) {
  const auto& X = x.value();
  Matrix<Real> out(1, X.cols);
  if (X.rows > 0) {
    for (std::size_t i = 0; i < X.rows; ++i)
      for (std::size_t j = 0; j < X.cols; ++j) out.data[j] += X(i, j);
    for (auto& v : out.data) v /= static_cast<Real>(X.rows);
  }
  return x.tape->record(std::move(out), {x}, [x](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gx = t.grad_buffer(x);
    if (gx.rows == 0) return;
    const Real s = Real(1) / static_cast<Real>(gx.rows);
    for (std::size_t i = 0; i < gx.rows; ++i)
      for (std::size_t j = 0; j < gx.cols; ++j) gx(i, j) += s * g.data[j];
  });
}

/// Row lists per segment; every segment in [0, count) must be nonempty.
struct Segments {
  std::vector<std::uint32_t> of_row;
  std::vector<std::uint32_t> offsets;  // CSR over rows grouped by segment
  std::vector<std::uint32_t> rows;

  Segments() = default;
  Segments(std::vector<std::uint32_t> segment_of_row, std::size_t count) : of_row(std::move(segment_of_row)) {
    offsets.assign(count + 1, 0);
    for (auto s : of_row) {
      if (s >= count) throw Error(Errc::ShapeMismatch, "segment id " + std::to_string(s) + " >= " + std::to_string(count));
      ++offsets[s + 1];
    }
    for (std::size_t s = 0; s < count; ++s) {
      if (offsets[s + 1] == 0) throw Error(Errc::EmptySegment, "segment " + std::to_string(s) + " has no rows");
      offsets[s + 1] += offsets[s];
    }
    rows.resize(of_row.size());
    std::vector<std::uint32_t> cur(offsets.begin(), offsets.end() - 1);
    for (std::uint32_t r = 0; r < of_row.size(); ++r) rows[cur[of_row[r]]++] = r;
  }

  std::size_t count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const std::uint32_t> members(std::size_t s) const { return {rows.data() + offsets[s], offsets[s + 1] - offsets[s]}; }
};

/// Softmax of scores[E,H] within each segment, independently per column.
template <class Real>
Var<Real> segment_softmax(Var<Real> scores, const Segments& seg) {
  const auto& S = scores.value();
  detail::require(seg.of_row.size() == S.rows, Errc::ShapeMismatch, "segment map covers " + std::to_string(seg.of_row.size()) +
                                                                        " rows, scores have " + std::to_string(S.rows));
  const std::size_t H = S.cols;
  Matrix<Real> out(S.rows, H);
  for (std::size_t s = 0; s < seg.count(); ++s) {
    auto rows = seg.members(s);
    for (std::size_t h = 0; h < H; ++h) {
      Real mx = -std::numeric_limits<Real>::infinity();
      for (auto r : rows) mx = std::max(mx, S(r, h));
      Real total = 0;
      for (auto r : rows) {
        out(r, h) = std::exp(S(r, h) - mx);
        total += out(r, h);
      }
      for (auto r : rows) out(r, h) /= total;
    }
  }
  auto alpha = out;
  return scores.tape->record(std::move(out), {scores}, [scores, seg, alpha = std::move(alpha)](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gs = t.grad_buffer(scores);
    const std::size_t H = g.cols;
    for (std::size_t s = 0; s < seg.count(); ++s) {
      auto rows = seg.members(s);
      for (std::size_t h = 0; h < H; ++h) {
        Real dot = 0;
        for (auto r : rows) dot += alpha(r, h) * g(r, h);
        for (auto r : rows) gs(r, h) += alpha(r, h) * (g(r, h) - dot);
      }
    }
  });
}

/// out[d, h*D + k] = sum over rows e with target[e] == d of alpha[e,h] * values[e, h*D + k].
/// Targets without rows produce zero rows.
template <class Real>
Var<Real> segment_weighted_sum(Var<Real> values, Var<Real> alpha, std::vector<std::uint32_t> target, std::size_t n_out) {
  const auto& V = values.value();
  const auto& A = alpha.value();
  detail::require(V.rows == A.rows && target.size() == V.rows && A.cols > 0 && V.cols % A.cols == 0, Errc::ShapeMismatch,
                  "segment_weighted_sum " + V.shape_string() + " by " + A.shape_string());
  const std::size_t H = A.cols, D = V.cols / H;
  Matrix<Real> out(n_out, V.cols);
  for (std::size_t e = 0; e < V.rows; ++e) {
    detail::require(target[e] < n_out, Errc::ShapeMismatch, "segment_weighted_sum target out of range");
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t k = 0; k < D; ++k) out(target[e], h * D + k) += A(e, h) * V(e, h * D + k);
  }
  return values.tape->record(std::move(out), {values, alpha},
                             [values, alpha, target = std::move(target)](Tape<Real>& t, const Matrix<Real>& g) {
    const auto& V = t.value(values);
    const auto& A = t.value(alpha);
    const std::size_t H = A.cols, D = V.cols / H;
    if (t.needs_grad(values)) {
      auto& gv = t.grad_buffer(values);
      for (std::size_t e = 0; e < V.rows; ++e)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t k = 0; k < D; ++k) gv(e, h * D + k) += A(e, h) * g(target[e], h * D + k);
    }
    if (t.needs_grad(alpha)) {
      auto& ga = t.grad_buffer(alpha);
      for (std::size_t e = 0; e < V.rows; ++e)
        for (std::size_t h = 0; h < H; ++h) {
          Real acc = 0;
          for (std::size_t k = 0; k < D; ++k) acc += V(e, h * D + k) * g(target[e], h * D + k);
          ga(e, h) += acc;
        }
    }
  });
}

/// Per-head dot product with attention vectors: x[E, H*D], a[H, D] -> [E, H].
template <class Real>
Var<Real> head_dot(Var<Real> x, Var<Real> a) {
  const auto& X = x.value();
  const auto& Av = a.value();
  detail::require(Av.rows > 0 && X.cols == Av.rows * Av.cols, Errc::ShapeMismatch, "head_dot " + X.shape_string() + " . " + Av.shape_string());
  const std::size_t H = Av.rows, D = Av.cols;
  Matrix<Real> out(X.rows, H);
  for (std::size_t e = 0; e < X.rows; ++e)
    for (std::size_t h = 0; h < H; ++h) {
      Real acc = 0;
      for (std::size_t k = 0; k < D; ++k) acc += X(e, h * D + k) * Av(h, k);
      out(e, h) = acc;
    }
  return x.tape->record(std::move(out), {x, a}, [x, a](Tape<Real>& t, const Matrix<Real>& g) {
    const auto& X = t.value(x);
    const auto& Av = t.value(a);
    const std::size_t H = Av.rows, D = Av.cols;
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buffer(x);
      for (std::size_t e = 0; e < X.rows; ++e)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t k = 0; k < D; ++k) gx(e, h * D + k) += g(e, h) * Av(h, k);
    }
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t e = 0; e < X.rows; ++e)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t k = 0; k < D; ++k) ga(h, k) += g(e, h) * X(e, h * D + k);
    }
  });
}

/// Mean over all entries of (pred - target)^2, as a [1,1] value.
template <class Real>
Var<Real> mse_loss(Var<Real> pred, Var<Real> target) {
  const auto& P = pred.value();
  const auto& T = target.value();
  detail::require(P.same_shape(T) && P.size() > 0, Errc::ShapeMismatch, "mse_loss " + P.shape_string() + " vs " + T.shape_string());
  double acc = 0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    double d = static_cast<double>(P.data[i]) - static_cast<double>(T.data[i]);
    acc += d * d;
  }
  Matrix<Real> out(1, 1, static_cast<Real>(acc / static_cast<double>(P.size())));
  return pred.tape->record(std::move(out), {pred, target}, [pred, target](Tape<Real>& t, const Matrix<Real>& g) {
    const auto& P = t.value(pred);
    const auto& T = t.value(target);
    const Real s = Real(2) * g.data[0] / static_cast<Real>(P.size());
    if (t.needs_grad(pred)) {
      auto& gp = t.grad_buffer(pred);
      for (std::size_t i = 0; i < P.size(); ++i) gp.data[i] += s * (P.data[i] - T.data[i]);
    }
    if (t.needs_grad(target)) {
      auto& gt = t.grad_buffer(target);
      for (std::size_t i = 0; i < P.size(); ++i) gt.data[i] -= s * (P.data[i] - T.data[i]);
    }
  });
}

/// Sum of all entries, [1,1].
template <class Real>
Var<Real> sum(Var<Real> x) {
  Real acc = 0;
  for (auto v : x.value().data) acc += v;
  return x.tape->record(Matrix<Real>(1, 1, acc), {x}, [x](Tape<Real>& t, const Matrix<Real>& g) {
    auto& gx = t.grad_buffer(x);
    for (auto& v : gx.data) v += g.data[0];
  });
}

}  // namespace ops

/// Central-difference check of d f / d x. Returns
/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
template <class F>
double grad_check(F&& f, const Matrix<double>& x, double h = 1e-4) {
  Parameter<double> p{"x", x, {}, true};
  p.zero_grad();
  {
    Tape<double> tape;
    auto out = f(tape, tape.parameter(p));
    tape.backward(out);
  }
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&](double delta) {
      Parameter<double> q{"x", x, {}, false};
      q.value.data[i] += delta;
      Tape<double> tape;
      return f(tape, tape.parameter(q)).value().data[0];
    };
    const double numeric = (eval(h) - eval(-h)) / (2 * h);
    const double analytic = p.grad.data[i];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
  }
  return worst;
}

/// Same check over every entry of every listed parameter. `loss` rebuilds its
/// computation on the tape it is given and returns a [1,1] value.
template <class F>
double grad_check_params(F&& loss, const std::vector<Parameter<double>*>& params, double h = 1e-4) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto out = loss(tape);
    tape.backward(out);
  }
  std::vector<Matrix<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  double worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data[i];
      auto eval = [&](double v) {
        p->value.data[i] = v;
        Tape<double> tape;
        double r = loss(tape).value().data[0];
        p->value.data[i] = orig;
        return r;
      };
      const double numeric = (eval(orig + h) - eval(orig - h)) / (2 * h);
      const double a = analytic[k].data[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace kgp
