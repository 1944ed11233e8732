#pragma once

// ReLU, Drop-Activation (train and test forms) and the randomized leaky ReLU
// comparator. Every variant is piecewise linear with slope 1 on x >= 0, so all
// of them reduce to "multiply negative entries by a per-element slope":
//
//   kind           negative-branch slope
//   Relu           0
//   DropActTrain   1 - keep[j]        (keep[j] ~ Bernoulli(p))
//   DropActTest    1 - p
//   RReluTrain     U_j ~ Uniform(a, b)
//   RReluTest      (a + b) / 2

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dropact/errors.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

enum class ActivationTag { Relu, DropActTrain, DropActTest, RReluTrain, RReluTest };

struct ActivationKind {
  ActivationTag tag = ActivationTag::Relu;
  double p = 0.95;
  double a = 1.0 / 8.0;
  double b = 1.0 / 3.0;

  static ActivationKind relu() { return {}; }
  static ActivationKind drop_act_train(double p) {
    return checked({ActivationTag::DropActTrain, p});
  }
  static ActivationKind drop_act_test(double p) {
    return checked({ActivationTag::DropActTest, p});
  }
  static ActivationKind rrelu_train(double a = 1.0 / 8.0, double b = 1.0 / 3.0) {
    return checked({ActivationTag::RReluTrain, 0.95, a, b});
  }
  static ActivationKind rrelu_test(double a = 1.0 / 8.0, double b = 1.0 / 3.0) {
    return checked({ActivationTag::RReluTest, 0.95, a, b});
  }

  bool is_drop_act() const {
    return tag == ActivationTag::DropActTrain || tag == ActivationTag::DropActTest;
  }
  bool is_rrelu() const {
    return tag == ActivationTag::RReluTrain || tag == ActivationTag::RReluTest;
  }
  bool stochastic() const {
    return tag == ActivationTag::DropActTrain || tag == ActivationTag::RReluTrain;
  }

  /// The member of this kind's train/test pair used in the given phase.
  ActivationKind for_phase(bool training) const {
    ActivationKind k = *this;
    if (is_drop_act()) k.tag = training ? ActivationTag::DropActTrain : ActivationTag::DropActTest;
    if (is_rrelu()) k.tag = training ? ActivationTag::RReluTrain : ActivationTag::RReluTest;
    return k;
  }

  void validate() const {
    if (is_drop_act() && !(p > 0.0 && p <= 1.0)) {
      throw ParameterError("retain probability p must lie in (0,1], got " + std::to_string(p));
    }
    if (is_rrelu() && !(a > 0.0 && a < b && b < 1.0)) {
      throw ParameterError("RReLU bounds must satisfy 0 < a < b < 1, got a=" + std::to_string(a) +
                           " b=" + std::to_string(b));
    }
  }

  std::string name() const {
    switch (tag) {
      case ActivationTag::Relu: return "relu";
      case ActivationTag::DropActTrain: return "dropact-train";
      case ActivationTag::DropActTest: return "dropact-test";
      case ActivationTag::RReluTrain: return "rrelu-train";
      case ActivationTag::RReluTest: return "rrelu-test";
    }
    return "?";
  }

  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;

private:
  static ActivationKind checked(ActivationKind k) {
    k.validate();
    return k;
  }
};

/// One Bernoulli(p) realization of keep/drop flags, one per activation unit.
struct DropMask {
  std::vector<std::uint8_t> keep;
  double p = 1.0;

  std::size_t size() const noexcept { return keep.size(); }
  friend bool operator==(const DropMask&, const DropMask&) = default;
};

/// Realized randomness of one stochastic forward pass: a mask for
/// Drop-Activation, per-element shrink rates for RReLU, nothing otherwise.
using ActivationDraw = std::variant<std::monostate, DropMask, std::vector<double>>;

namespace detail {

// A zero slope yields +0.0 rather than -0.0 so that every variant whose slope
// is zero agrees bit-for-bit with relu().
inline double leaky(double x, double slope) {
  if (x >= 0.0) return x;
  return slope == 0.0 ? 0.0 : slope * x;
}

inline void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ParameterError("retain probability p must lie in (0,1], got " + std::to_string(p));
  }
}

inline void check_ab(double a, double b) {
  if (!(a > 0.0 && a < b && b < 1.0)) {
    throw ParameterError("RReLU bounds must satisfy 0 < a < b < 1, got a=" + std::to_string(a) +
                         " b=" + std::to_string(b));
  }
}

} // namespace detail

inline Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v >= 0.0 ? v : 0.0; });
}

/// I.i.d. Bernoulli(p) flags. Consumes exactly `width` draws from `rng`.
inline DropMask sample_mask(std::size_t width, double p, Rng& rng) {
  detail::check_p(p);
  if (width == 0) throw ParameterError("mask width must be at least 1");
  std::bernoulli_distribution keep(p);
  DropMask mask;
  mask.p = p;
  mask.keep.resize(width);
  for (auto& k : mask.keep) k = keep(rng) ? 1 : 0;
  return mask;
}

inline Tensor drop_act_train(const Tensor& x, const DropMask& mask) {
  if (mask.size() != x.size()) {
    throw DimensionError("drop_act_train: mask length " + std::to_string(mask.size()) +
                         " does not match input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = detail::leaky(x[j], mask.keep[j] ? 0.0 : 1.0);
  return out;
}

/// Leaky ReLU with negative slope 1 - p: the expectation of drop_act_train.
inline Tensor drop_act_test(const Tensor& x, double p) {
  detail::check_p(p);
  const double slope = 1.0 - p;
  return map(x, [slope](double v) { return detail::leaky(v, slope); });
}

/// Per-element Uniform(a, b) shrink rates.
inline std::vector<double> sample_shrink(std::size_t count, double a, double b, Rng& rng) {
  detail::check_ab(a, b);
  std::uniform_real_distribution<double> u(a, b);
  std::vector<double> rates(count);
  for (auto& r : rates) r = u(rng);
  return rates;
}

/// RReLU with given shrink rates (one per element).
inline Tensor rrelu_apply(const Tensor& x, std::span<const double> shrink) {
  if (shrink.size() != x.size()) {
    throw DimensionError("rrelu: " + std::to_string(shrink.size()) + " shrink rates for input " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = detail::leaky(x[j], shrink[j]);
  return out;
}

inline Tensor rrelu_train(const Tensor& x, double a, double b, Rng& rng) {
  const auto shrink = sample_shrink(x.size(), a, b, rng);
  return rrelu_apply(x, shrink);
}

inline Tensor rrelu_test(const Tensor& x, double a, double b) {
  detail::check_ab(a, b);
  const double slope = 0.5 * (a + b);
  return map(x, [slope](double v) { return detail::leaky(v, slope); });
}

/// Sample whatever randomness `kind` needs for `count` units.
inline ActivationDraw sample_draw(const ActivationKind& kind, std::size_t count, Rng& rng) {
  switch (kind.tag) {
    case ActivationTag::DropActTrain: return sample_mask(count, kind.p, rng);
    case ActivationTag::RReluTrain: return sample_shrink(count, kind.a, kind.b, rng);
    default: return std::monostate{};
  }
}

/// Negative-branch slope of element j under `kind` and its realized draw.
inline std::vector<double> negative_slopes(const ActivationKind& kind, std::size_t count,
                                           const ActivationDraw& draw) {
  kind.validate();
  switch (kind.tag) {
    case ActivationTag::Relu: return std::vector<double>(count, 0.0);
    case ActivationTag::DropActTest: return std::vector<double>(count, 1.0 - kind.p);
    case ActivationTag::RReluTest: return std::vector<double>(count, 0.5 * (kind.a + kind.b));
    case ActivationTag::DropActTrain: {
      const auto* mask = std::get_if<DropMask>(&draw);
      if (!mask) throw ContractError("Drop-Activation (train) requires a stored mask");
      if (mask->size() != count) {
        throw DimensionError("stored mask length " + std::to_string(mask->size()) +
                             " does not match " + std::to_string(count) + " units");
      }
      std::vector<double> s(count);
      for (std::size_t j = 0; j < count; ++j) s[j] = mask->keep[j] ? 0.0 : 1.0;
      return s;
    }
    case ActivationTag::RReluTrain: {
      const auto* shrink = std::get_if<std::vector<double>>(&draw);
      if (!shrink) throw ContractError("RReLU (train) requires stored shrink rates");
      if (shrink->size() != count) {
        throw DimensionError("stored shrink rates do not match " + std::to_string(count) + " units");
      }
      return *shrink;
    }
  }
  return {};
}

/// Forward pass of any kind given its realized draw.
inline Tensor activate(const ActivationKind& kind, const Tensor& x, const ActivationDraw& draw) {
  const auto slopes = negative_slopes(kind, x.size(), draw);
  Tensor out(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = detail::leaky(x[j], slopes[j]);
  return out;
}

/// Upstream gradient times the slope used on each element's forward branch.
/// x == 0 belongs to the identity branch (slope 1).
inline Tensor activation_backward(const ActivationKind& kind, const Tensor& x,
                                  const Tensor& upstream, const ActivationDraw& draw = {}) {
  require_same_shape(x, upstream, "activation_backward");
  const auto slopes = negative_slopes(kind, x.size(), draw);
  Tensor grad(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) {
    grad[j] = x[j] >= 0.0 ? upstream[j] : slopes[j] * upstream[j];
  }
  return grad;
}

} // namespace dropact
