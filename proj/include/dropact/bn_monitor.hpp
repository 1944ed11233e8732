#pragma once

// Train/test variance shift at the input of the second BN of a
// BN -> activation -> affine -> BN block, tracked over training.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dropact/autograd.hpp"
#include "dropact/errors.hpp"
#include "dropact/networks.hpp"
#include "dropact/trainer.hpp"

namespace dropact {

struct ShiftMeasurement {
  std::size_t epoch = 0;
  double ratio = 0.0;     ///< var_test / var_train
  double var_train = 0.0; ///< mean over units of the per-unit variance, Train mode
  double var_test = 0.0;  ///< same, Test mode
};

/// Index of the affine layer inside the first BN -> activation -> affine -> BN
/// run of layers. Its output is the monitored (pre-BN) signal.
inline std::size_t find_monitored_layer(const MLP& model) {
  const auto& s = model.specs();
  using K = LayerSpec::Kind;
  for (std::size_t i = 0; i + 3 < s.size(); ++i) {
    if (s[i].kind == K::BatchNorm && s[i + 1].kind == K::Activation && s[i + 2].kind == K::Affine &&
        s[i + 3].kind == K::BatchNorm) {
      return i + 2;
    }
  }
  throw ConfigurationError("model has no BN -> activation -> affine -> BN block to monitor");
}

namespace monitor_detail {

inline double mean_unit_variance(const Tensor& x) {
  if (x.rows() < 2) throw ParameterError("variance monitor needs at least 2 evaluation rows");
  const auto s = batch_moments(x);
  const double m = static_cast<double>(x.rows());
  double total = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j) total += s.variance[j] * m / (m - 1.0);
  return total / static_cast<double>(x.cols());
}

} // namespace monitor_detail

/// One measurement on a copy of `model`. The copy first runs the whole
/// evaluation set in Train mode (masks sampled) with BN running statistics set
/// to that batch's statistics, then runs it again in Test mode. Both passes
/// therefore normalize with the same BN statistics upstream of the monitored
/// block, and only the stochastic activations differ.
inline ShiftMeasurement measure_shift(const MLP& model, const Tensor& inputs, std::size_t epoch = 0) {
  const std::size_t layer = find_monitored_layer(model);
  MLP probe = model;
  probe.freeze_draws(false);
  probe.set_statistics_policy(StatisticsPolicy::Assign);
  probe.set_mode(Mode::Train);
  Tape train_tape;
  const auto train_pass = probe.forward(train_tape, inputs);
  const double var_train =
      monitor_detail::mean_unit_variance(train_tape.value(train_pass.layer_outputs[layer]));

  probe.set_mode(Mode::Test);
  Tape test_tape;
  const auto test_pass = probe.forward(test_tape, inputs);
  const double var_test =
      monitor_detail::mean_unit_variance(test_tape.value(test_pass.layer_outputs[layer]));
  return {epoch, var_test / var_train, var_train, var_test};
}

/// Trains `model` for cfg.epochs and measures the shift ratio at every epoch
/// listed in `schedule` (0 = before training). Measurements never alter the
/// trained model.
inline std::vector<ShiftMeasurement> bn_block_shift_monitor(MLP& model, const SupervisedSet& data,
                                                            const Tensor& eval_inputs,
                                                            const std::vector<std::size_t>& schedule,
                                                            const TrainConfig& cfg) {
  (void)find_monitored_layer(model);
  std::vector<ShiftMeasurement> series;
  auto wanted = [&](std::size_t e) {
    return std::find(schedule.begin(), schedule.end(), e) != schedule.end();
  };
  if (wanted(0)) series.push_back(measure_shift(model, eval_inputs, 0));
  train(model, data, cfg, nullptr, [&](std::size_t epoch, MLP& m) {
    if (wanted(epoch)) series.push_back(measure_shift(m, eval_inputs, epoch));
  });
  return series;
}

} // namespace dropact
