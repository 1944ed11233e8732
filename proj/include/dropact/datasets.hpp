#pragma once

// Synthetic regression targets, a synthetic clustered classification set, and
// a strict reader for IDX image/label files (MNIST/EMNIST layout).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dropact/errors.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

// ---------------------------------------------------------------------------
// Regression.

enum class RegressionTarget { XSinX, PiecewiseConstant };

struct RegressionTask {
  RegressionTarget target = RegressionTarget::XSinX;
  double lo = -10.0;
  double hi = 10.0;
  std::size_t n_train = 20;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  std::size_t grid_size = 1001;

  static RegressionTask defaults(RegressionTarget target, std::uint64_t seed = 0) {
    RegressionTask t;
    t.target = target;
    t.noise_sigma = target == RegressionTarget::XSinX ? 1.0 : 0.3;
    t.seed = seed;
    return t;
  }

  void validate() const {
    if (!(lo < hi)) throw ParameterError("regression domain needs lo < hi");
    if (n_train < 2) throw ParameterError("regression task needs at least 2 training points");
    if (!(noise_sigma >= 0.0)) throw ParameterError("noise sigma must be nonnegative");
    if (grid_size < 2) throw ParameterError("evaluation grid needs at least 2 points");
  }
};

/// -2 on [-10,-5), 1 on [-5,0), 3 on [0,5), -1 on [5,10]; edge values extend
/// outside the domain.
inline double piecewise_constant(double x) {
  if (x < -5.0) return -2.0;
  if (x < 0.0) return 1.0;
  if (x < 5.0) return 3.0;
  return -1.0;
}

inline double regression_truth(RegressionTarget target, double x) {
  return target == RegressionTarget::XSinX ? x * std::sin(x) : piecewise_constant(x);
}

struct RegressionData {
  std::vector<double> x, y;           ///< noisy training pairs
  std::vector<double> grid_x, grid_f; ///< noise-free dense grid
};

inline RegressionData gen_regression(const RegressionTask& task) {
  task.validate();
  Rng rng = make_rng(task.seed, Stream::Data);
  std::uniform_real_distribution<double> ux(task.lo, task.hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  RegressionData d;
  for (std::size_t i = 0; i < task.n_train; ++i) {
    const double x = ux(rng);
    const double eps = noise(rng);
    d.x.push_back(x);
    d.y.push_back(regression_truth(task.target, x) + task.noise_sigma * eps);
  }
  const double step = (task.hi - task.lo) / static_cast<double>(task.grid_size - 1);
  for (std::size_t i = 0; i < task.grid_size; ++i) {
    const double x = i + 1 == task.grid_size ? task.hi : task.lo + step * static_cast<double>(i);
    d.grid_x.push_back(x);
    d.grid_f.push_back(regression_truth(task.target, x));
  }
  return d;
}

/// Column matrix [n x 1] from a list of scalars.
inline Tensor column(const std::vector<double>& v) { return Tensor({v.size(), 1}, v); }

// ---------------------------------------------------------------------------
// Classification.

struct LabeledData {
  Tensor inputs; ///< [n x features]
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t features() const { return inputs.cols(); }

  /// Rows at `indices`, in that order.
  LabeledData subset(const std::vector<std::size_t>& indices) const {
    if (indices.empty()) throw ParameterError("empty subset");
    LabeledData out;
    out.class_count = class_count;
    out.inputs = Tensor({indices.size(), features()});
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const auto src = inputs.row(indices[r]);
      std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
      out.labels.push_back(labels[indices[r]]);
    }
    return out;
  }
};

struct ClusterTask {
  std::size_t n = 600;
  std::size_t features = 16;
  std::size_t classes = 4;
  double separation = 1.0; ///< std of class centres relative to unit within-class noise
  std::uint64_t seed = 0;
};

/// Gaussian clusters: centre_c ~ N(0, separation^2 I), x = centre_label + N(0, I).
inline LabeledData make_clusters(const ClusterTask& task) {
  if (task.n == 0 || task.features == 0 || task.classes < 2) {
    throw ParameterError("cluster task needs n >= 1, features >= 1, classes >= 2");
  }
  Rng rng = make_rng(task.seed, Stream::Data);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, task.classes - 1);
  Tensor centres({task.classes, task.features});
  for (auto& v : centres.data()) v = task.separation * n01(rng);
  LabeledData d;
  d.class_count = task.classes;
  d.inputs = Tensor({task.n, task.features});
  for (std::size_t i = 0; i < task.n; ++i) {
    const std::size_t c = label(rng);
    d.labels.push_back(c);
    for (std::size_t j = 0; j < task.features; ++j) d.inputs(i, j) = centres(c, j) + n01(rng);
  }
  return d;
}

/// Seeded shuffle, then the first round(n * val_fraction) items become the
/// validation part.
inline std::pair<LabeledData, LabeledData> train_val_split(const LabeledData& data,
                                                           double val_fraction,
                                                           std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ParameterError("validation fraction must lie in (0,1), got " + std::to_string(val_fraction));
  }
  const std::size_t n = data.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  if (n_val == 0 || n_val >= n) {
    throw ParameterError("split of " + std::to_string(n) + " items at fraction " +
                         std::to_string(val_fraction) + " leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::Split);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {data.subset(train), data.subset(val)};
}

// ---------------------------------------------------------------------------
// IDX.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct LabeledImages {
  Tensor images; ///< [n x rows x cols], values in [0, 1]
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  /// Flatten to [n x rows*cols] rows for the classifier.
  LabeledData flatten() const {
    const std::size_t n = images.shape()[0];
    return {images.reshaped({n, images.size() / n}), labels, class_count};
  }
};

namespace idx_detail {

inline std::uint32_t be32(std::string_view bytes, std::size_t at) {
  return std::uint32_t(static_cast<unsigned char>(bytes[at])) << 24 |
         std::uint32_t(static_cast<unsigned char>(bytes[at + 1])) << 16 |
         std::uint32_t(static_cast<unsigned char>(bytes[at + 2])) << 8 |
         std::uint32_t(static_cast<unsigned char>(bytes[at + 3]));
}

inline std::string hex(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s.push_back(digits[(v >> shift) & 0xF]);
  return s;
}

inline void check_header(std::string_view bytes, std::size_t header_len, std::uint32_t magic,
                         const std::string& what) {
  if (bytes.size() < header_len) {
    throw LengthError(what + ": header truncated (" + std::to_string(bytes.size()) + " bytes)");
  }
  const auto found = be32(bytes, 0);
  if (found != magic) {
    throw FormatError(what + ": bad magic, expected " + hex(magic) + ", found " + hex(found));
  }
}

inline void check_payload(std::string_view bytes, std::size_t header_len, std::uint64_t payload,
                          const std::string& what) {
  const std::uint64_t have = bytes.size() - header_len;
  if (have < payload) {
    throw LengthError(what + ": payload truncated, expected " + std::to_string(payload) +
                      " bytes, found " + std::to_string(have));
  }
  if (have > payload) {
    throw LengthError(what + ": " + std::to_string(have - payload) + " trailing bytes after payload");
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace idx_detail

/// Images from IDX bytes: big-endian magic, count, rows, cols; u8 pixels / 255.
inline Tensor parse_idx_images(std::string_view bytes, const std::string& what = "idx images") {
  idx_detail::check_header(bytes, 16, kIdxImageMagic, what);
  const std::uint32_t n = idx_detail::be32(bytes, 4);
  const std::uint32_t rows = idx_detail::be32(bytes, 8);
  const std::uint32_t cols = idx_detail::be32(bytes, 12);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(what + ": zero extent in header");
  idx_detail::check_payload(bytes, 16, std::uint64_t{n} * rows * cols, what);
  Tensor out({n, rows, cols});
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(static_cast<unsigned char>(bytes[16 + i])) / 255.0;
  }
  return out;
}

inline std::vector<std::size_t> parse_idx_labels(std::string_view bytes,
                                                 const std::string& what = "idx labels") {
  idx_detail::check_header(bytes, 8, kIdxLabelMagic, what);
  const std::uint32_t n = idx_detail::be32(bytes, 4);
  idx_detail::check_payload(bytes, 8, n, what);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

inline Tensor load_idx_images(const std::string& path) {
  return parse_idx_images(idx_detail::read_file(path), path);
}

inline std::vector<std::size_t> load_idx_labels(const std::string& path) {
  return parse_idx_labels(idx_detail::read_file(path), path);
}

/// Paired image and label files; class_count = max label + 1.
inline LabeledImages load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
  LabeledImages d;
  d.images = load_idx_images(images_path);
  d.labels = load_idx_labels(labels_path);
  if (d.labels.size() != d.images.shape()[0]) {
    throw FormatError("image count " + std::to_string(d.images.shape()[0]) +
                      " does not match label count " + std::to_string(d.labels.size()));
  }
  d.class_count = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

} // namespace dropact
