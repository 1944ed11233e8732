#pragma once

// Layer-spec driven feed-forward networks with a train/test phase switch.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dropact/activations.hpp"
#include "dropact/autograd.hpp"
#include "dropact/errors.hpp"
#include "dropact/penalty_oracle.hpp"
#include "dropact/random.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

enum class Mode { Train, Test };

struct LayerSpec {
  enum class Kind { Affine, Activation, BatchNorm };

  Kind kind = Kind::Affine;
  std::size_t out_width = 0;
  bool with_bias = true;
  ActivationKind activation{};

  static LayerSpec affine(std::size_t out_width, bool with_bias = true) {
    return {Kind::Affine, out_width, with_bias, {}};
  }
  static LayerSpec act(ActivationKind kind) {
    kind.validate();
    return {Kind::Activation, 0, false, kind};
  }
  static LayerSpec batch_norm() { return {Kind::BatchNorm, 0, false, {}}; }
};

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// How train-mode BN layers treat their running statistics.
enum class StatisticsPolicy {
  Update, ///< exponential moving average with the layer's momentum
  Freeze, ///< leave untouched
  Assign, ///< overwrite with this batch's mean and biased variance
};

/// Whether one Drop-Activation mask is drawn per example or shared by the batch.
enum class MaskSharing { PerSample, PerBatch };

class MLP {
public:
  struct Pass {
    NodeId input = 0;
    NodeId output = 0;
    std::vector<NodeId> parameter_nodes; ///< parallel to parameters()
    std::vector<NodeId> layer_outputs;   ///< one per spec
  };

  MLP(std::size_t input_width, std::vector<LayerSpec> specs, std::uint64_t seed)
      : input_width_(input_width), specs_(std::move(specs)), seed_(seed),
        mask_rng_(make_rng(seed, Stream::Masks)) {
    if (input_width_ == 0) throw DimensionError("input width must be positive");
    Rng init = make_rng(seed, Stream::Init);
    std::size_t width = input_width_;
    layers_.resize(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const LayerSpec& s = specs_[i];
      Layer& layer = layers_[i];
      layer.in_width = width;
      switch (s.kind) {
        case LayerSpec::Kind::Affine: {
          if (s.out_width == 0) throw DimensionError("affine layer width must be positive");
          std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(width)));
          Tensor w({s.out_width, width});
          for (auto& v : w.data()) v = he(init);
          layer.first_param = params_.size();
          params_.push_back(std::move(w));
          if (s.with_bias) params_.emplace_back(Shape{s.out_width}, 0.0);
          width = s.out_width;
          break;
        }
        case LayerSpec::Kind::BatchNorm: {
          layer.first_param = params_.size();
          params_.emplace_back(Shape{width}, 1.0);
          params_.emplace_back(Shape{width}, 0.0);
          layer.bn = batch_norms_.size();
          batch_norms_.push_back({Tensor({width}, 0.0), Tensor({width}, 1.0)});
          break;
        }
        case LayerSpec::Kind::Activation:
          s.activation.validate();
          break;
      }
      layer.out_width = width;
    }
    output_width_ = width;
  }

  Mode mode() const noexcept { return mode_; }

  /// Switches every stochastic activation and every BN layer at once.
  MLP& set_mode(Mode mode) {
    mode_ = mode;
    return *this;
  }

  std::size_t input_width() const noexcept { return input_width_; }
  std::size_t output_width() const noexcept { return output_width_; }
  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  std::vector<BatchNormState>& batch_norms() noexcept { return batch_norms_; }
  const std::vector<BatchNormState>& batch_norms() const noexcept { return batch_norms_; }

  /// Output width of layer i.
  std::size_t layer_width(std::size_t i) const { return layers_.at(i).out_width; }

  void set_statistics_policy(StatisticsPolicy policy) noexcept { stats_policy_ = policy; }
  StatisticsPolicy statistics_policy() const noexcept { return stats_policy_; }

  void set_mask_sharing(MaskSharing sharing) noexcept { mask_sharing_ = sharing; }

  /// While frozen, stochastic layers reuse the draws of the last train-mode
  /// pass instead of sampling new ones.
  void freeze_draws(bool frozen) noexcept { draws_frozen_ = frozen; }
  bool draws_frozen() const noexcept { return draws_frozen_; }

  /// Draws realized by the last train-mode pass, per layer (monostate for
  /// deterministic layers).
  const std::vector<ActivationDraw>& last_draws() const noexcept { return last_draws_; }

  /// Total mask/shrink draws taken so far; never advances in Test mode.
  std::uint64_t draws_sampled() const noexcept { return draws_sampled_; }

  Rng& mask_rng() noexcept { return mask_rng_; }

  /// Record a forward pass of the [batch x input_width] matrix `x` on `tape`.
  Pass forward(Tape& tape, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != input_width_) {
      throw DimensionError("model expects [batch x " + std::to_string(input_width_) +
                           "] input, got " + shape_string(x.shape()));
    }
    const bool training = mode_ == Mode::Train;
    if (last_draws_.size() != layers_.size()) last_draws_.assign(layers_.size(), std::monostate{});

    Pass pass;
    pass.input = tape.constant(x);
    pass.parameter_nodes.reserve(params_.size());
    for (const auto& p : params_) pass.parameter_nodes.push_back(tape.parameter(p));

    NodeId h = pass.input;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const LayerSpec& s = specs_[i];
      const Layer& layer = layers_[i];
      switch (s.kind) {
        case LayerSpec::Kind::Affine:
          h = linear(tape, h, pass.parameter_nodes[layer.first_param]);
          if (s.with_bias) h = add_bias(tape, h, pass.parameter_nodes[layer.first_param + 1]);
          break;
        case LayerSpec::Kind::Activation: {
          const ActivationKind kind = s.activation.for_phase(training);
          ActivationDraw draw;
          if (kind.stochastic()) {
            const std::size_t count = tape.value(h).size();
            if (draws_frozen_) {
              draw = last_draws_[i];
            } else {
              draw = sample_layer_draw(kind, tape.value(h).rows(), layer.out_width);
              draws_sampled_ += count;
              last_draws_[i] = draw;
            }
          }
          h = activation(tape, h, kind, std::move(draw));
          break;
        }
        case LayerSpec::Kind::BatchNorm: {
          BatchNormState& bn = batch_norms_[layer.bn];
          const NodeId gamma = pass.parameter_nodes[layer.first_param];
          const NodeId beta = pass.parameter_nodes[layer.first_param + 1];
          if (training) {
            const NodeId in = h;
            h = batch_norm(tape, in, gamma, beta, bn.eps);
            update_statistics(bn, tape.value(in));
          } else {
            h = batch_norm_fixed(tape, h, gamma, beta, bn.running_mean, bn.running_var, bn.eps);
          }
          break;
        }
      }
      pass.layer_outputs.push_back(h);
    }
    pass.output = h;
    return pass;
  }

  /// Forward without keeping the tape. Same phase semantics as forward().
  Tensor predict(const Tensor& x) {
    Tape tape;
    return tape.value(forward(tape, x).output);
  }

  /// Parameters followed by each BN layer's running mean and variance.
  std::vector<Tensor> state() const {
    std::vector<Tensor> out = params_;
    for (const auto& bn : batch_norms_) {
      out.push_back(bn.running_mean);
      out.push_back(bn.running_var);
    }
    return out;
  }

  void load_state(std::vector<Tensor> tensors) {
    if (tensors.size() != params_.size() + 2 * batch_norms_.size()) {
      throw DimensionError("state has " + std::to_string(tensors.size()) + " tensors, model needs " +
                           std::to_string(params_.size() + 2 * batch_norms_.size()));
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      require_same_shape(params_[i], tensors[i], "load_state");
    }
    for (std::size_t i = 0; i < batch_norms_.size(); ++i) {
      require_same_shape(batch_norms_[i].running_mean, tensors[params_.size() + 2 * i], "load_state");
      require_same_shape(batch_norms_[i].running_var, tensors[params_.size() + 2 * i + 1], "load_state");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] = std::move(tensors[i]);
    for (std::size_t i = 0; i < batch_norms_.size(); ++i) {
      batch_norms_[i].running_mean = std::move(tensors[params_.size() + 2 * i]);
      batch_norms_[i].running_var = std::move(tensors[params_.size() + 2 * i + 1]);
    }
  }

private:
  struct Layer {
    std::size_t in_width = 0;
    std::size_t out_width = 0;
    std::size_t first_param = 0;
    std::size_t bn = 0;
  };

  ActivationDraw sample_layer_draw(const ActivationKind& kind, std::size_t batch, std::size_t width) {
    if (mask_sharing_ == MaskSharing::PerSample || !kind.is_drop_act()) {
      return sample_draw(kind, batch * width, mask_rng_);
    }
    DropMask row = sample_mask(width, kind.p, mask_rng_);
    DropMask tiled;
    tiled.p = kind.p;
    for (std::size_t i = 0; i < batch; ++i) tiled.keep.insert(tiled.keep.end(), row.keep.begin(), row.keep.end());
    return tiled;
  }

  void update_statistics(BatchNormState& bn, const Tensor& input) const {
    if (stats_policy_ == StatisticsPolicy::Freeze) return;
    const auto s = batch_moments(input);
    if (stats_policy_ == StatisticsPolicy::Assign) {
      bn.running_mean = s.mean;
      bn.running_var = s.variance;
      return;
    }
    const double m = static_cast<double>(input.rows());
    const double correction = m > 1.0 ? m / (m - 1.0) : 1.0;
    for (std::size_t j = 0; j < s.mean.size(); ++j) {
      bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * s.mean[j];
      bn.running_var[j] =
          (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * s.variance[j] * correction;
    }
  }

  std::size_t input_width_;
  std::size_t output_width_ = 0;
  std::vector<LayerSpec> specs_;
  std::uint64_t seed_;
  std::vector<Layer> layers_;
  std::vector<Tensor> params_;
  std::vector<BatchNormState> batch_norms_;
  Mode mode_ = Mode::Train;
  StatisticsPolicy stats_policy_ = StatisticsPolicy::Update;
  MaskSharing mask_sharing_ = MaskSharing::PerSample;
  bool draws_frozen_ = false;
  std::vector<ActivationDraw> last_draws_;
  std::uint64_t draws_sampled_ = 0;
  Rng mask_rng_;
};

inline MLP& set_mode(MLP& model, Mode mode) { return model.set_mode(mode); }

// ---------------------------------------------------------------------------
// Builders.

inline const std::vector<std::size_t>& regression_widths() {
  static const std::vector<std::size_t> widths{1000, 800, 200};
  return widths;
}

/// 1 -> widths... -> 1 with the activation after each hidden affine layer.
inline MLP build_regression_net(const ActivationKind& activation, std::uint64_t seed,
                                const std::vector<std::size_t>& widths = regression_widths()) {
  std::vector<LayerSpec> specs;
  for (auto w : widths) {
    specs.push_back(LayerSpec::affine(w));
    specs.push_back(LayerSpec::act(activation));
  }
  specs.push_back(LayerSpec::affine(1));
  return MLP(1, std::move(specs), seed);
}

/// Bias-free `d_in -> k -> d_out` net, the trainable twin of OneHiddenNet.
inline MLP build_one_hidden(std::size_t k, std::size_t d_in, std::size_t d_out, std::uint64_t seed,
                            const ActivationKind& activation = ActivationKind::relu()) {
  if (k == 0 || d_in == 0 || d_out == 0) throw DimensionError("one-hidden dims must be positive");
  return MLP(d_in,
             {LayerSpec::affine(k, false), LayerSpec::act(activation), LayerSpec::affine(d_out, false)},
             seed);
}

inline bool is_one_hidden(const MLP& model) {
  const auto& s = model.specs();
  return s.size() == 3 && s[0].kind == LayerSpec::Kind::Affine && !s[0].with_bias &&
         s[1].kind == LayerSpec::Kind::Activation && s[2].kind == LayerSpec::Kind::Affine &&
         !s[2].with_bias;
}

inline OneHiddenNet to_one_hidden(const MLP& model) {
  if (!is_one_hidden(model)) throw ConfigurationError("model is not a bias-free one-hidden net");
  return {model.parameters()[0], model.parameters()[1]};
}

inline void assign_one_hidden(MLP& model, const OneHiddenNet& net) {
  if (!is_one_hidden(model)) throw ConfigurationError("model is not a bias-free one-hidden net");
  require_same_shape(model.parameters()[0], net.w1, "assign_one_hidden");
  require_same_shape(model.parameters()[1], net.w2, "assign_one_hidden");
  model.parameters()[0] = net.w1;
  model.parameters()[1] = net.w2;
}

/// Affine(+BN)+activation per hidden width, then a linear layer of `classes`
/// logits.
inline MLP build_classifier(std::size_t input_width, const std::vector<std::size_t>& hidden_widths,
                            std::size_t classes, const ActivationKind& activation, bool with_bn,
                            std::uint64_t seed) {
  if (hidden_widths.empty()) throw DimensionError("classifier needs at least one hidden layer");
  std::vector<LayerSpec> specs;
  for (auto w : hidden_widths) {
    specs.push_back(LayerSpec::affine(w));
    if (with_bn) specs.push_back(LayerSpec::batch_norm());
    specs.push_back(LayerSpec::act(activation));
  }
  specs.push_back(LayerSpec::affine(classes));
  return MLP(input_width, std::move(specs), seed);
}

// ---------------------------------------------------------------------------
// Flat binary state: "DACT", u32 version, then per tensor u32 rank, u32
// extents, f64 payload. All little-endian.

inline constexpr std::uint32_t kStateVersion = 1;

namespace serial_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFU));
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw LengthError("state file truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace serial_detail

inline std::string encode_tensors(std::span<const Tensor> tensors) {
  std::string out = "DACT";
  serial_detail::put_u32(out, kStateVersion);
  for (const auto& t : tensors) {
    serial_detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) serial_detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data()) serial_detail::put_f64(out, v);
  }
  return out;
}

inline std::vector<Tensor> decode_tensors(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "DACT") throw FormatError("state file: missing DACT magic");
  serial_detail::Reader in(bytes.substr(4));
  const auto version = in.u32();
  if (version != kStateVersion) {
    throw FormatError("state file: unsupported version " + std::to_string(version));
  }
  std::vector<Tensor> out;
  while (!in.done()) {
    const auto rank = in.u32();
    if (rank == 0 || rank > 8) throw FormatError("state file: bad tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = in.u32();
    std::size_t count = 1;
    for (auto e : shape) {
      if (e == 0) throw FormatError("state file: zero tensor extent");
      if (e > in.remaining() / 8 / count) throw LengthError("state file truncated");
      count *= e;
    }
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = in.f64();
    out.emplace_back(std::move(shape), std::move(data));
  }
  return out;
}

inline void save_state(const std::string& path, const MLP& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const auto bytes = encode_tensors(model.state());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

inline void load_state(const std::string& path, MLP& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  model.load_state(decode_tensors(bytes));
}

} // namespace dropact
