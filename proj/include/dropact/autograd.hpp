#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// Each recorded node keeps its forward rule, so the whole tape can be replayed
// from its leaves; backward walks the nodes in reverse insertion order, which
// is a valid reverse topological order because inputs always precede outputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dropact/activations.hpp"
#include "dropact/errors.hpp"
#include "dropact/tensor.hpp"

namespace dropact {

using NodeId = std::size_t;

class Gradients;

class Tape {
public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;
  /// Returns one gradient per input; an empty Tensor means "no contribution".
  using BackwardFn =
      std::function<std::vector<Tensor>(Inputs, const Tensor& output, const Tensor& upstream)>;

  NodeId constant(Tensor value) { return leaf(std::move(value), false, "constant"); }
  NodeId parameter(Tensor value) { return leaf(std::move(value), true, "parameter"); }

  NodeId record(std::string op, std::vector<NodeId> inputs, ForwardFn forward,
                BackwardFn backward) {
    for (auto id : inputs) {
      if (id >= nodes_.size()) throw ContractError(op + ": input node does not exist");
    }
    Node node{std::move(op), {}, std::move(inputs), std::move(forward), std::move(backward), false};
    node.value = node.forward(gather(node.inputs));
    ensure_finite(node.value, node.op.c_str());
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool is_parameter(NodeId id) const { return nodes_.at(id).parameter; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  /// Recompute every non-leaf value from the leaves. True iff each recomputed
  /// value is bit-identical to the stored one.
  bool replay_matches() const {
    std::vector<Tensor> fresh(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.inputs.empty()) {
        fresh[i] = n.value;
        continue;
      }
      std::vector<const Tensor*> in;
      for (auto id : n.inputs) in.push_back(&fresh[id]);
      fresh[i] = n.forward(in);
      if (!(fresh[i] == n.value)) return false;
    }
    return true;
  }

private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<NodeId> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool parameter;
  };

  NodeId leaf(Tensor value, bool parameter, const char* op) {
    ensure_finite(value, op);
    nodes_.push_back(Node{op, std::move(value), {}, nullptr, nullptr, parameter});
    return nodes_.size() - 1;
  }

  std::vector<const Tensor*> gather(const std::vector<NodeId>& ids) const {
    std::vector<const Tensor*> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(&nodes_[id].value);
    return out;
  }

  friend class Gradients;
  friend Gradients backward(const Tape& tape, NodeId loss);

  std::vector<Node> nodes_;
};

/// dLoss/dNode for every node of a tape.
class Gradients {
public:
  /// Gradient with the node's shape; zeros if the loss does not depend on it.
  Tensor of(NodeId id) const {
    if (id >= grads_.size()) throw ContractError("gradient requested for unknown node");
    if (grads_[id].empty()) return Tensor(shapes_[id]);
    return grads_[id];
  }

private:
  friend Gradients backward(const Tape& tape, NodeId loss);
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

/// Reverse accumulation from a scalar loss node. Gradients of tensors that
/// feed several consumers are summed.
inline Gradients backward(const Tape& tape, NodeId loss) {
  if (loss >= tape.size()) throw ContractError("backward: loss node does not exist");
  if (tape.value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(tape.value(loss).shape()));
  }
  Gradients g;
  g.grads_.resize(tape.size());
  g.shapes_.reserve(tape.size());
  for (const auto& n : tape.nodes_) g.shapes_.push_back(n.value.shape());
  g.grads_[loss] = Tensor(tape.value(loss).shape(), 1.0);

  for (std::size_t i = loss + 1; i-- > 0;) {
    const auto& node = tape.nodes_[i];
    if (g.grads_[i].empty() || node.inputs.empty()) continue;
    const auto in = tape.gather(node.inputs);
    auto contributions = node.backward(in, node.value, g.grads_[i]);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Tensor& c = contributions[k];
      if (c.empty()) continue;
      Tensor& acc = g.grads_[node.inputs[k]];
      if (acc.empty()) {
        acc = std::move(c);
      } else {
        require_same_shape(acc, c, "gradient accumulation");
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c[j];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Primitive operations.

inline NodeId matmul(Tape& tape, NodeId a, NodeId b) {
  return tape.record(
      "matmul", {a, b}, [](Tape::Inputs in) { return matmul(*in[0], *in[1]); },
      [](Tape::Inputs in, const Tensor&, const Tensor& up) {
        return std::vector<Tensor>{matmul_nt(up, *in[1]), matmul_tn(*in[0], up)};
      });
}

/// x[m x in] . W[out x in]^T, the affine map of a weight stored as [out x in].
inline NodeId linear(Tape& tape, NodeId x, NodeId weight) {
  return tape.record(
      "linear", {x, weight}, [](Tape::Inputs in) { return matmul_nt(*in[0], *in[1]); },
      [](Tape::Inputs in, const Tensor&, const Tensor& up) {
        return std::vector<Tensor>{matmul(up, *in[1]), matmul_tn(up, *in[0])};
      });
}

inline NodeId transpose(Tape& tape, NodeId a) {
  return tape.record(
      "transpose", {a}, [](Tape::Inputs in) { return transpose(*in[0]); },
      [](Tape::Inputs, const Tensor&, const Tensor& up) {
        return std::vector<Tensor>{transpose(up)};
      });
}

/// x[m x n] + b[n] broadcast over rows.
inline NodeId add_bias(Tape& tape, NodeId x, NodeId bias) {
  const auto& xs = tape.value(x).shape();
  const auto& bs = tape.value(bias).shape();
  if (xs.size() != 2 || bs.size() != 1 || bs[0] != xs[1]) {
    throw DimensionError("add_bias: cannot add " + shape_string(bs) + " to rows of " +
                         shape_string(xs));
  }
  return tape.record(
      "add_bias", {x, bias},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        const std::size_t m = out.rows(), n = out.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) out(i, j) += (*in[1])[j];
        return out;
      },
      [](Tape::Inputs in, const Tensor&, const Tensor& up) {
        Tensor db(in[1]->shape());
        for (std::size_t i = 0; i < up.rows(); ++i)
          for (std::size_t j = 0; j < up.cols(); ++j) db[j] += up(i, j);
        return std::vector<Tensor>{up, db};
      });
}

inline NodeId add(Tape& tape, NodeId a, NodeId b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  return tape.record(
      "add", {a, b}, [](Tape::Inputs in) { return *in[0] + *in[1]; },
      [](Tape::Inputs, const Tensor&, const Tensor& up) { return std::vector<Tensor>{up, up}; });
}

inline NodeId scale(Tape& tape, NodeId a, double factor) {
  return tape.record(
      "scale", {a}, [factor](Tape::Inputs in) { return factor * *in[0]; },
      [factor](Tape::Inputs, const Tensor&, const Tensor& up) {
        return std::vector<Tensor>{factor * up};
      });
}

/// Elementwise activation with its realized draw frozen into the node, so the
/// backward pass uses exactly the branch slopes of the forward pass.
inline NodeId activation(Tape& tape, NodeId x, const ActivationKind& kind,
                         ActivationDraw draw = {}) {
  // Fail at record time rather than during backward.
  (void)negative_slopes(kind, tape.value(x).size(), draw);
  return tape.record(
      "activation:" + kind.name(), {x},
      [kind, draw](Tape::Inputs in) { return activate(kind, *in[0], draw); },
      [kind, draw](Tape::Inputs in, const Tensor&, const Tensor& up) {
        return std::vector<Tensor>{activation_backward(kind, *in[0], up, draw)};
      });
}

/// Per-column mean and biased variance of a [m x n] batch.
struct BatchMoments {
  Tensor mean;
  Tensor variance;
};

inline BatchMoments batch_moments(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  BatchMoments s{Tensor({n}), Tensor({n})};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) s.mean[j] += x(i, j);
  for (std::size_t j = 0; j < n; ++j) s.mean[j] /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x(i, j) - s.mean[j];
      s.variance[j] += d * d;
    }
  for (std::size_t j = 0; j < n; ++j) s.variance[j] /= static_cast<double>(m);
  return s;
}

/// gamma * (x - mean) / sqrt(var + eps) + beta, columnwise. Shared by the
/// batch-statistics and running-statistics paths so that identical statistics
/// give bit-identical outputs.
inline Tensor normalize_columns(const Tensor& x, const Tensor& mean, const Tensor& var,
                                const Tensor& gamma, const Tensor& beta, double eps) {
  Tensor out(x.shape());
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t j = 0; j < n; ++j) {
    const double inv_std = 1.0 / std::sqrt(var[j] + eps);
    for (std::size_t i = 0; i < m; ++i) out(i, j) = gamma[j] * ((x(i, j) - mean[j]) * inv_std) + beta[j];
  }
  return out;
}

/// Batch normalization with batch statistics (training phase).
inline NodeId batch_norm(Tape& tape, NodeId x, NodeId gamma, NodeId beta, double eps) {
  const auto& xs = tape.value(x).shape();
  if (xs.size() != 2 || tape.value(gamma).shape() != Shape{xs[1]} ||
      tape.value(beta).shape() != Shape{xs[1]}) {
    throw DimensionError("batch_norm: parameters do not match input " + shape_string(xs));
  }
  return tape.record(
      "batch_norm", {x, gamma, beta},
      [eps](Tape::Inputs in) {
        const auto s = batch_moments(*in[0]);
        return normalize_columns(*in[0], s.mean, s.variance, *in[1], *in[2], eps);
      },
      [eps](Tape::Inputs in, const Tensor&, const Tensor& up) {
        const Tensor& xv = *in[0];
        const Tensor& g = *in[1];
        const std::size_t m = xv.rows(), n = xv.cols();
        const auto s = batch_moments(xv);
        Tensor dx(xv.shape()), dgamma({n}), dbeta({n});
        for (std::size_t j = 0; j < n; ++j) {
          const double inv_std = 1.0 / std::sqrt(s.variance[j] + eps);
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (xv(i, j) - s.mean[j]) * inv_std;
            const double dxhat = up(i, j) * g[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgamma[j] += up(i, j) * xhat;
            dbeta[j] += up(i, j);
          }
          const double md = static_cast<double>(m);
          for (std::size_t i = 0; i < m; ++i) {
            const double xhat = (xv(i, j) - s.mean[j]) * inv_std;
            const double dxhat = up(i, j) * g[j];
            dx(i, j) = inv_std / md * (md * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
          }
        }
        return std::vector<Tensor>{dx, dgamma, dbeta};
      });
}

/// Batch normalization with fixed (running) statistics (inference phase).
inline NodeId batch_norm_fixed(Tape& tape, NodeId x, NodeId gamma, NodeId beta, Tensor mean,
                               Tensor var, double eps) {
  return tape.record(
      "batch_norm_fixed", {x, gamma, beta},
      [mean, var, eps](Tape::Inputs in) {
        return normalize_columns(*in[0], mean, var, *in[1], *in[2], eps);
      },
      [mean, var, eps](Tape::Inputs in, const Tensor&, const Tensor& up) {
        const Tensor& xv = *in[0];
        const std::size_t m = xv.rows(), n = xv.cols();
        Tensor dx(xv.shape()), dgamma({n}), dbeta({n});
        for (std::size_t j = 0; j < n; ++j) {
          const double inv_std = 1.0 / std::sqrt(var[j] + eps);
          for (std::size_t i = 0; i < m; ++i) {
            dx(i, j) = up(i, j) * (*in[1])[j] * inv_std;
            dgamma[j] += up(i, j) * (xv(i, j) - mean[j]) * inv_std;
            dbeta[j] += up(i, j);
          }
        }
        return std::vector<Tensor>{dx, dgamma, dbeta};
      });
}

/// Sum of squared differences.
inline NodeId sum_squared_error(Tape& tape, NodeId pred, NodeId target) {
  require_same_shape(tape.value(pred), tape.value(target), "sum_squared_error");
  return tape.record(
      "sum_squared_error", {pred, target},
      [](Tape::Inputs in) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double d = (*in[0])[i] - (*in[1])[i];
          acc += d * d;
        }
        return Tensor::scalar(acc);
      },
      [](Tape::Inputs in, const Tensor&, const Tensor& up) {
        Tensor d = *in[0] - *in[1];
        Tensor gp = (2.0 * up[0]) * d;
        Tensor gt = (-2.0 * up[0]) * d;
        return std::vector<Tensor>{gp, gt};
      });
}

/// Mean over all elements of the squared difference.
inline NodeId mse_loss(Tape& tape, NodeId pred, NodeId target) {
  const double count = static_cast<double>(tape.value(pred).size());
  return scale(tape, sum_squared_error(tape, pred, target), 1.0 / count);
}

/// Mean softmax cross-entropy of [m x classes] logits against integer labels.
inline NodeId softmax_cross_entropy(Tape& tape, NodeId logits, std::vector<std::size_t> labels) {
  const Tensor& z = tape.value(logits);
  if (z.rank() != 2 || z.rows() != labels.size()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_string(z.shape()));
  }
  for (auto l : labels) {
    if (l >= z.cols()) throw DimensionError("softmax_cross_entropy: label out of range");
  }
  auto probabilities = [](const Tensor& zv) {
    Tensor prob(zv.shape());
    for (std::size_t i = 0; i < zv.rows(); ++i) {
      const auto row = zv.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (std::size_t c = 0; c < zv.cols(); ++c) total += (prob(i, c) = std::exp(row[c] - mx));
      for (std::size_t c = 0; c < zv.cols(); ++c) prob(i, c) /= total;
    }
    return prob;
  };
  return tape.record(
      "softmax_cross_entropy", {logits},
      [labels](Tape::Inputs in) {
        const Tensor& zv = *in[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < zv.rows(); ++i) {
          const auto row = zv.row(i);
          const double mx = *std::max_element(row.begin(), row.end());
          double total = 0.0;
          for (double v : row) total += std::exp(v - mx);
          acc += mx + std::log(total) - row[labels[i]];
        }
        return Tensor::scalar(acc / static_cast<double>(zv.rows()));
      },
      [labels, probabilities](Tape::Inputs in, const Tensor&, const Tensor& up) {
        Tensor g = probabilities(*in[0]);
        const double f = up[0] / static_cast<double>(g.rows());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          g(i, labels[i]) -= 1.0;
          for (std::size_t c = 0; c < g.cols(); ++c) g(i, c) *= f;
        }
        return std::vector<Tensor>{g};
      });
}

// ---------------------------------------------------------------------------

/// Central differences (L(t + h e_i) - L(t - h e_i)) / 2h for every coordinate.
template <class Loss>
Tensor finite_difference_grad(Loss&& eval_loss, const Tensor& theta, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = eval_loss(static_cast<const Tensor&>(probe));
    probe[i] = theta[i] - h;
    const double down = eval_loss(static_cast<const Tensor&>(probe));
    probe[i] = theta[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

} // namespace dropact
