#pragma once

// Expected training loss of a bias-free one-hidden-layer ReLU network under
// Drop-Activation, computed several ways:
//
//   closed_form_loss            sum_i |W2 r_p(W1 x_i) - y_i|^2
//                               + (1-p)/p |W2 W1 x_i - W2 r_p(W1 x_i)|^2
//   exact_expected_loss         sum_i |W2 r_p(W1 x_i) - y_i|^2
//                               + p(1-p) sum_j [v_j <= 0] v_j^2 |W2[:, j]|^2
//   enumerated_expected_loss    exact average over all 2^k hidden masks
//   monte_carlo_expected_loss   sampled average
//
// Enumeration agrees with exact_expected_loss to rounding error for every
// net. It agrees with closed_form_loss only when the cross terms between
// inactive hidden units vanish (k = 1, a single inactive unit per sample, or
// orthogonal inactive columns of W2).

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dropact/activations.hpp"
#include "dropact/errors.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

struct OneHiddenNet {
  Tensor w1; ///< [k x d_in]
  Tensor w2; ///< [d_out x k]

  std::size_t hidden() const { return w1.rows(); }
  std::size_t input_width() const { return w1.cols(); }
  std::size_t output_width() const { return w2.rows(); }

  void validate() const {
    if (w1.rank() != 2 || w2.rank() != 2 || w2.cols() != w1.rows()) {
      throw DimensionError("one-hidden net: W1 " + shape_string(w1.shape()) + " and W2 " +
                           shape_string(w2.shape()) + " do not compose");
    }
  }
};

struct Sample {
  Tensor x; ///< [d_in]
  Tensor y; ///< [d_out]
};

using SampleSet = std::vector<Sample>;

/// D: flag j is 1 iff (W1 x)[j] > 0 strictly.
struct ActivationPattern {
  std::vector<std::uint8_t> active;
};

namespace oracle_detail {

inline void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ParameterError("retain probability p must lie in (0,1], got " + std::to_string(p));
  }
}

inline void check_data(const OneHiddenNet& net, const SampleSet& data) {
  net.validate();
  if (data.empty()) throw DimensionError("sample set is empty");
  for (const auto& s : data) {
    if (s.x.size() != net.input_width() || s.y.size() != net.output_width()) {
      throw DimensionError("sample dimensions do not match the network");
    }
  }
}

inline Tensor as_column(const Tensor& v) { return v.reshaped({v.size(), 1}); }

/// W1 x as a flat [k] vector.
inline Tensor preactivation(const OneHiddenNet& net, const Tensor& x) {
  if (x.size() != net.input_width()) {
    throw DimensionError("input " + shape_string(x.shape()) + " does not match W1 " +
                         shape_string(net.w1.shape()));
  }
  return matmul(net.w1, as_column(x)).reshaped({net.hidden()});
}

inline Tensor apply_w2(const OneHiddenNet& net, const Tensor& hidden) {
  return matmul(net.w2, as_column(hidden)).reshaped({net.output_width()});
}

inline double squared_distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

} // namespace oracle_detail

inline ActivationPattern activation_pattern(const OneHiddenNet& net, const Tensor& x) {
  const Tensor v = oracle_detail::preactivation(net, x);
  ActivationPattern d;
  d.active.resize(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) d.active[j] = v[j] > 0.0 ? 1 : 0;
  return d;
}

/// Network output W2 r(W1 x) with a plain ReLU hidden layer.
inline Tensor relu_output(const OneHiddenNet& net, const Tensor& x) {
  return oracle_detail::apply_w2(net, relu(oracle_detail::preactivation(net, x)));
}

/// (1-p)/p |W2 W1 x - W2 r_p(W1 x)|^2.
inline double penalty_term(const OneHiddenNet& net, const Tensor& x, double p) {
  oracle_detail::check_p(p);
  net.validate();
  const Tensor v = oracle_detail::preactivation(net, x);
  const Tensor linear = oracle_detail::apply_w2(net, v);
  const Tensor blended = oracle_detail::apply_w2(net, drop_act_test(v, p));
  return (1.0 - p) / p * oracle_detail::squared_distance(linear, blended);
}

/// Test-time squared error plus the Drop-Activation penalty, summed over samples.
inline double closed_form_loss(const OneHiddenNet& net, const SampleSet& data, double p) {
  oracle_detail::check_p(p);
  oracle_detail::check_data(net, data);
  std::vector<double> per_sample;
  per_sample.reserve(data.size());
  for (const auto& s : data) {
    const Tensor v = oracle_detail::preactivation(net, s.x);
    const Tensor pred = oracle_detail::apply_w2(net, drop_act_test(v, p));
    const Tensor linear = oracle_detail::apply_w2(net, v);
    per_sample.push_back(oracle_detail::squared_distance(pred, s.y) +
                         (1.0 - p) / p * oracle_detail::squared_distance(linear, pred));
  }
  return pairwise_sum(per_sample);
}

/// p(1-p) sum_j [v_j <= 0] v_j^2 |W2[:, j]|^2 with v = W1 x: the mask variance
/// of the training-phase output. Each mask bit is independent, so only the
/// diagonal of W2^T W2 enters. penalty_term() squares the summed vector
/// instead and so also carries the cross products between inactive units;
/// the two agree when at most one unit is inactive or the inactive columns of
/// W2 are orthogonal.
inline double exact_penalty_term(const OneHiddenNet& net, const Tensor& x, double p) {
  oracle_detail::check_p(p);
  net.validate();
  const Tensor v = oracle_detail::preactivation(net, x);
  double acc = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j] > 0.0) continue;
    double column = 0.0;
    for (std::size_t r = 0; r < net.output_width(); ++r) column += net.w2(r, j) * net.w2(r, j);
    acc += v[j] * v[j] * column;
  }
  return p * (1.0 - p) * acc;
}

/// Mask-averaged training loss in closed form: test-time squared error plus
/// exact_penalty_term, summed over samples.
inline double exact_expected_loss(const OneHiddenNet& net, const SampleSet& data, double p) {
  oracle_detail::check_p(p);
  oracle_detail::check_data(net, data);
  std::vector<double> per_sample;
  per_sample.reserve(data.size());
  for (const auto& s : data) {
    const Tensor v = oracle_detail::preactivation(net, s.x);
    const Tensor pred = oracle_detail::apply_w2(net, drop_act_test(v, p));
    per_sample.push_back(oracle_detail::squared_distance(pred, s.y) + exact_penalty_term(net, s.x, p));
  }
  return pairwise_sum(per_sample);
}

/// Squared error of the training-phase network under one fixed hidden mask.
inline double masked_loss(const OneHiddenNet& net, const Sample& s, const DropMask& mask) {
  const Tensor v = oracle_detail::preactivation(net, s.x);
  const Tensor pred = oracle_detail::apply_w2(net, drop_act_train(v, mask));
  return oracle_detail::squared_distance(pred, s.y);
}

inline constexpr std::size_t kMaxEnumeratedHidden = 20;

/// Exact expectation over all 2^k masks, weighted by prod p^m (1-p)^(1-m).
inline double enumerated_expected_loss(const OneHiddenNet& net, const SampleSet& data, double p) {
  oracle_detail::check_p(p);
  oracle_detail::check_data(net, data);
  const std::size_t k = net.hidden();
  if (k > kMaxEnumeratedHidden) {
    throw CapacityError("mask enumeration supports at most " +
                        std::to_string(kMaxEnumeratedHidden) + " hidden units, got " +
                        std::to_string(k) + "; use monte_carlo_expected_loss");
  }
  const std::uint64_t count = std::uint64_t{1} << k;
  std::vector<double> terms(count);
  std::vector<double> per_sample(data.size());
  std::vector<Tensor> preacts;
  for (const auto& s : data) preacts.push_back(oracle_detail::preactivation(net, s.x));
  DropMask mask;
  mask.p = p;
  mask.keep.resize(k);
  for (std::uint64_t bits = 0; bits < count; ++bits) {
    double weight = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
      mask.keep[j] = (bits >> j) & 1U;
      weight *= mask.keep[j] ? p : 1.0 - p;
    }
    if (weight == 0.0) {
      terms[bits] = 0.0;
      continue;
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Tensor pred = oracle_detail::apply_w2(net, drop_act_train(preacts[i], mask));
      per_sample[i] = oracle_detail::squared_distance(pred, data[i].y);
    }
    terms[bits] = weight * pairwise_sum(per_sample);
  }
  return pairwise_sum(terms);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
};

/// Sample mean and standard error of the training loss, with a fresh mask per
/// sample per trial.
inline MonteCarloEstimate monte_carlo_expected_loss(const OneHiddenNet& net, const SampleSet& data,
                                                    double p, std::size_t trials, Rng& rng) {
  oracle_detail::check_p(p);
  oracle_detail::check_data(net, data);
  if (trials == 0) throw ParameterError("monte carlo estimate needs at least one trial");
  // Welford accumulation.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double loss = 0.0;
    for (const auto& s : data) loss += masked_loss(net, s, sample_mask(net.hidden(), p, rng));
    const double delta = loss - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (loss - mean);
  }
  MonteCarloEstimate e;
  e.mean = mean;
  e.trials = trials;
  e.standard_error = trials > 1 ? std::sqrt(m2 / static_cast<double>(trials - 1) / static_cast<double>(trials))
                         : 0.0;
  return e;
}

/// Random net and data with standard normal entries.
inline OneHiddenNet random_one_hidden(std::size_t k, std::size_t d_in, std::size_t d_out, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  OneHiddenNet net{Tensor({k, d_in}), Tensor({d_out, k})};
  for (auto& v : net.w1.data()) v = n01(rng);
  for (auto& v : net.w2.data()) v = n01(rng);
  return net;
}

inline SampleSet random_samples(std::size_t n, std::size_t d_in, std::size_t d_out, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  SampleSet data;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{Tensor({d_in}), Tensor({d_out})};
    for (auto& v : s.x.data()) v = n01(rng);
    for (auto& v : s.y.data()) v = n01(rng);
    data.push_back(std::move(s));
  }
  return data;
}

} // namespace dropact
