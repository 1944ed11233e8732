#pragma once

// Variance of the Drop-Activation -> linear box under standard normal inputs:
//
//   X_train = sum_i w_i ((1 - P_i) x_i + P_i r(x_i)),   P_i ~ Bernoulli(p)
//   X_test  = sum_i w_i ((1 - p)  x_i + p   r(x_i))
//
//   Var(X_train) = |w|^2 (1 - p/2 - p^2/(2 pi))
//   Var(X_test)  = |w|^2 ((1/2 - 1/(2 pi)) p^2 - p + 1)

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dropact/errors.hpp"
#include "dropact/random.hpp"

namespace dropact {

namespace shift_detail {

inline void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError("p must lie in [0,1], got " + std::to_string(p));
  }
}

inline double sum_squares(std::span<const double> w) {
  double acc = 0.0;
  for (double v : w) acc += v * v;
  return acc;
}

inline double inv_two_pi() { return 1.0 / (2.0 * std::numbers::pi); }

} // namespace shift_detail

/// E X_train = E X_test = p sum(w) / sqrt(2 pi).
inline double analytic_mean(std::span<const double> w, double p) {
  shift_detail::check_p(p);
  double total = 0.0;
  for (double v : w) total += v;
  return p * total / std::sqrt(2.0 * std::numbers::pi);
}

inline double analytic_var_train(std::span<const double> w, double p) {
  shift_detail::check_p(p);
  return shift_detail::sum_squares(w) * (1.0 - 0.5 * p - shift_detail::inv_two_pi() * p * p);
}

inline double analytic_var_test(std::span<const double> w, double p) {
  shift_detail::check_p(p);
  return shift_detail::sum_squares(w) *
         ((0.5 - shift_detail::inv_two_pi()) * p * p - p + 1.0);
}

/// Var(X_test) / Var(X_train); does not depend on w.
inline double analytic_shift_ratio(double p) {
  shift_detail::check_p(p);
  const double c = shift_detail::inv_two_pi();
  return ((0.5 - c) * p * p - p + 1.0) / (1.0 - 0.5 * p - c * p * p);
}

struct BoxConfig {
  std::vector<double> w;
  double p = 0.95;
  std::size_t sample_count = 100000;
  std::uint64_t seed = 0;
};

struct ShiftRatioReport {
  double analytic_mean = 0.0;
  double analytic_var_train = 0.0;
  double analytic_var_test = 0.0;
  double analytic_ratio = 0.0;
  double empirical_mean_train = 0.0;
  double empirical_mean_test = 0.0;
  double empirical_var_train = 0.0;
  double empirical_var_test = 0.0;
  double empirical_ratio = 0.0;
  std::size_t sample_count = 0;
};

/// Streaming mean and unbiased variance.
class RunningMoments {
public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Monte Carlo of the box: x ~ N(0, I_d), a fresh mask per sample for X_train,
/// the deterministic blend for X_test (same x for both).
inline ShiftRatioReport simulate_box(const BoxConfig& cfg) {
  shift_detail::check_p(cfg.p);
  if (cfg.w.empty()) throw ParameterError("box weights must be nonempty");
  if (shift_detail::sum_squares(cfg.w) == 0.0) throw ParameterError("box weights are all zero");
  if (cfg.sample_count < 2) throw ParameterError("simulate_box needs at least 2 samples");

  Rng inputs = make_rng(cfg.seed, Stream::Data);
  Rng masks = make_rng(cfg.seed, Stream::Masks);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::bernoulli_distribution keep(cfg.p);

  RunningMoments train, test;
  const double p = cfg.p;
  for (std::size_t s = 0; s < cfg.sample_count; ++s) {
    double x_train = 0.0, x_test = 0.0;
    for (double wi : cfg.w) {
      const double x = n01(inputs);
      const double r = x > 0.0 ? x : 0.0;
      x_train += wi * (keep(masks) ? r : x);
      x_test += wi * ((1.0 - p) * x + p * r);
    }
    train.add(x_train);
    test.add(x_test);
  }

  ShiftRatioReport rep;
  rep.analytic_mean = analytic_mean(cfg.w, p);
  rep.analytic_var_train = analytic_var_train(cfg.w, p);
  rep.analytic_var_test = analytic_var_test(cfg.w, p);
  rep.analytic_ratio = analytic_shift_ratio(p);
  rep.empirical_mean_train = train.mean();
  rep.empirical_mean_test = test.mean();
  rep.empirical_var_train = train.variance();
  rep.empirical_var_test = test.variance();
  rep.empirical_ratio = rep.empirical_var_test / rep.empirical_var_train;
  rep.sample_count = cfg.sample_count;
  return rep;
}

/// Weight vector with i.i.d. N(0, 1) entries.
inline std::vector<double> gaussian_weights(std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::Init);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> w(d);
  for (auto& v : w) v = n01(rng);
  return w;
}

} // namespace dropact
