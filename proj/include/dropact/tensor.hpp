#pragma once

// Dense row-major tensor of 64-bit reals plus the handful of kernels the
// networks need. Shapes are checked eagerly; every kernel output is checked
// for finiteness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dropact/errors.hpp"

namespace dropact {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  /// Row-major matrix from nested braces: `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank(2);
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2);
    return shape_[1];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  static std::size_t checked_size(const Shape& shape) {
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
    return shape_size(shape);
  }

  void require_rank(std::size_t r) const {
    if (shape_.size() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " +
                           shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline const Tensor& ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  return t;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

/// Standard matrix product, a[m x k] . b[k x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.row(i).data();
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a(i, kk);
      const double* brow = b.row(kk).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  ensure_finite(out, "matmul");
  return out;
}

/// a[m x k] . b[n x k]^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: cannot multiply " + shape_string(a.shape()) +
                         " by transpose of " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      out(i, j) = acc;
    }
  }
  ensure_finite(out, "matmul_nt");
  return out;
}

/// a[k x m]^T . b[k x n].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b.row(kk).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = a(kk, i);
      if (aki == 0.0) continue;
      double* orow = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += aki * brow[j];
    }
  }
  ensure_finite(out, "matmul_tn");
  return out;
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

/// Elementwise combination of two same-shape tensors.
template <class F>
Tensor zip_with(const Tensor& a, const Tensor& b, F f, const char* op = "zip_with") {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  ensure_finite(out, op);
  return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  return zip_with(a, b, std::plus<>(), "add");
}
inline Tensor operator-(const Tensor& a, const Tensor& b) {
  return zip_with(a, b, std::minus<>(), "subtract");
}
inline Tensor operator*(double s, const Tensor& a) {
  return map(a, [s](double v) { return s * v; });
}

/// Recursive pairwise summation; error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double acc = 0.0;
    for (double v : xs) acc += v;
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double squared_norm(std::span<const double> xs) {
  double acc = 0.0;
  for (double v : xs) acc += v * v;
  return acc;
}

/// |a - b| / max(1, |a|, |b|): absolute near zero, relative elsewhere.
inline double mixed_relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace dropact
