// SPDX-License-Identifier: Apache-2.0
//
// Recurrent and feed-forward blocks composed from the autodiff primitives.
// Nothing here is fused: every block is a short sequence of matvec, add and
// elementwise nodes so that gradient checks exercise exactly what trains.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hera/autodiff.hpp"
#include "hera/errors.hpp"
#include "hera/optim.hpp"

namespace hera {

/// Gated recurrent unit with the convention
///
///   r  = sigmoid(W_r x + U_r h + b_r)
///   z  = sigmoid(W_z x + U_z h + b_z)
///   n  = tanh(W_n x + r * (U_n h) + b_n)
///   h' = (1 - z) * h + z * n
///
/// so z is the share of the candidate state that enters the new state.
struct GruCell {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter W_r, W_z, W_n;
  Parameter U_r, U_z, U_n;
  Parameter b_r, b_z, b_n;

  GruCell() = default;
  GruCell(const std::string& name, std::size_t input, std::size_t hidden, std::uint64_t seed)
      : input_size(input), hidden_size(hidden) {
    if (input == 0 || hidden == 0) throw ContractError("GruCell '" + name + "': sizes must be positive");
    std::uint64_t salt = 0;
    auto make = [&](const char* suffix, std::size_t rows, std::size_t cols) {
      return init_params({name + "." + suffix, rows, cols, hidden}, mix_seed(seed, salt++));
    };
    W_r = make("W_r", hidden, input);
    W_z = make("W_z", hidden, input);
    W_n = make("W_n", hidden, input);
    U_r = make("U_r", hidden, hidden);
    U_z = make("U_z", hidden, hidden);
    U_n = make("U_n", hidden, hidden);
    b_r = make("b_r", hidden, 1);
    b_z = make("b_z", hidden, 1);
    b_n = make("b_n", hidden, 1);
  }

  Var step(Graph& g, Var x, Var h) const {
    if (g.rows(x) != input_size || g.cols(x) != 1) {
      throw DimensionError("gru_step(input to reset/update/candidate gates): expected " +
                           shape_string(input_size, 1) + ", got " + shape_string(g.rows(x), g.cols(x)));
    }
    if (g.rows(h) != hidden_size || g.cols(h) != 1) {
      throw DimensionError("gru_step(recurrent state to reset/update/candidate gates): expected " +
                           shape_string(hidden_size, 1) + ", got " + shape_string(g.rows(h), g.cols(h)));
    }
    Var r = g.sigmoid(g.add(g.add(g.matvec(g.param(W_r), x), g.matvec(g.param(U_r), h)), g.param(b_r)));
    Var z = g.sigmoid(g.add(g.add(g.matvec(g.param(W_z), x), g.matvec(g.param(U_z), h)), g.param(b_z)));
    Var n = g.tanh(g.add(g.add(g.matvec(g.param(W_n), x), g.hadamard(r, g.matvec(g.param(U_n), h))),
                         g.param(b_n)));
    return g.add(g.hadamard(g.one_minus(z), h), g.hadamard(z, n));
  }

  std::vector<Parameter*> parameters() { return {&W_r, &W_z, &W_n, &U_r, &U_z, &U_n, &b_r, &b_z, &b_n}; }
};

enum class Activation : std::uint8_t { Identity, Tanh, Sigmoid };

/// Fully connected stack; hidden layers use tanh, the last layer uses
/// `output_activation`.
struct Mlp {
  struct Layer {
    Parameter weight;
    Parameter bias;
  };
  std::vector<Layer> layers;
  Activation output_activation = Activation::Identity;

  Mlp() = default;
  Mlp(const std::string& name, std::vector<std::size_t> widths, Activation out, std::uint64_t seed)
      : output_activation(out) {
    if (widths.size() < 2) throw ContractError("Mlp '" + name + "': needs input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const std::string prefix = name + ".l" + std::to_string(i);
      Layer layer{init_params({prefix + ".W", widths[i + 1], widths[i], widths[i]}, mix_seed(seed, 2 * i)),
                  init_params({prefix + ".b", widths[i + 1], 1, widths[i]}, mix_seed(seed, 2 * i + 1))};
      layers.push_back(std::move(layer));
    }
  }

  std::size_t input_size() const { return layers.front().weight.value.cols; }
  std::size_t output_size() const { return layers.back().weight.value.rows; }

  Var forward(Graph& g, Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = g.add(g.matvec(g.param(layers[i].weight), x), g.param(layers[i].bias));
      const bool last = i + 1 == layers.size();
      if (!last) {
        x = g.tanh(x);
      } else if (output_activation == Activation::Tanh) {
        x = g.tanh(x);
      } else if (output_activation == Activation::Sigmoid) {
        x = g.sigmoid(x);
      }
    }
    return x;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

inline constexpr double kMinDuration = 1e-3;

struct HeadOutput {
  Var logits;
  Var duration;  // sigmoid output, unclamped (differentiable)
};

struct HeadPrediction {
  std::vector<double> logits;
  double duration = 0.0;  // clamped to [kMinDuration, 1]

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
};

/// Label-and-duration head: one tanh hidden layer, final width
/// label_out + 1 (class logits followed by one duration unit).
struct MlpHead {
  Mlp mlp;
  std::size_t label_out = 0;

  MlpHead() = default;
  MlpHead(const std::string& name, std::size_t input, std::size_t hidden, std::size_t labels, std::uint64_t seed)
      : mlp(name, {input, hidden, labels + 1}, Activation::Identity, seed), label_out(labels) {
    if (labels == 0) throw ContractError("MlpHead '" + name + "': needs at least one class");
  }

  HeadOutput forward(Graph& g, Var h) const {
    Var out = mlp.forward(g, h);
    return {g.slice(out, 0, label_out), g.sigmoid(g.slice(out, label_out, 1))};
  }

  std::vector<Parameter*> parameters() { return mlp.parameters(); }
};

/// Evaluates a head inside an existing graph (no gradient needed).
inline HeadPrediction evaluate_head(Graph& g, const MlpHead& head, Var h) {
  const HeadOutput out = head.forward(g, h);
  HeadPrediction p;
  auto lv = g.value(out.logits);
  p.logits.assign(lv.begin(), lv.end());
  p.duration = std::clamp(g.scalar_value(out.duration), kMinDuration, 1.0);
  return p;
}

/// Clamps a predicted duration into the remaining budget; a remainder
/// shorter than the minimum duration is absorbed.
inline double fit_duration(double d, double remaining) {
  d = std::min(std::max(d, kMinDuration), remaining);
  if (remaining - d < kMinDuration) d = remaining;
  return d;
}

/// Inference helper: evaluates the head on a concrete hidden vector.
inline HeadPrediction head_predict(const MlpHead& head, std::span<const double> h) {
  if (h.size() != head.mlp.input_size()) {
    throw DimensionError("head_predict: expected hidden " + shape_string(head.mlp.input_size(), 1) + ", got " +
                         shape_string(h.size(), 1));
  }
  Graph g;
  return evaluate_head(g, head, g.constant(h));
}

struct EmbeddingTable {
  Parameter matrix;

  EmbeddingTable() = default;
  EmbeddingTable(const std::string& name, std::size_t vocab, std::size_t dim, std::uint64_t seed)
      : matrix(init_params({name, vocab, dim, dim}, seed)) {}

  std::size_t vocab_size() const { return matrix.value.rows; }
  std::size_t dim() const { return matrix.value.cols; }

  Var lookup(Graph& g, std::size_t id) const {
    if (id >= vocab_size()) {
      throw VocabularyError("embedding '" + matrix.name + "': id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(vocab_size()));
    }
    return g.slice(g.param(matrix), id * dim(), dim());
  }
};

inline constexpr std::size_t kDurationBins = 100;

/// Bin of an accumulated duration: min(floor(a * bins), bins - 1). A 1e-9
/// guard absorbs representation error such as 0.29 * 100 = 28.999...
inline std::size_t duration_bin(double a, std::size_t bins = kDurationBins) {
  if (!(a >= -1e-9 && a <= 1.0 + 1e-9)) {
    throw ContractError("duration_bin: accumulated duration " + std::to_string(a) + " outside [0, 1]");
  }
  const double scaled = std::floor(std::max(a, 0.0) * static_cast<double>(bins) + 1e-9);
  return std::min(static_cast<std::size_t>(scaled), bins - 1);
}

/// concat(label embedding, binned accumulated-duration embedding).
inline Var embed_inputs(Graph& g, std::size_t label, double accumulated, const EmbeddingTable& labels,
                        const EmbeddingTable& durations) {
  const std::size_t bin = duration_bin(accumulated, durations.vocab_size());
  return g.concat({labels.lookup(g, label), durations.lookup(g, bin)});
}

/// -log softmax(logits)[target].
inline Var nll_loss(Graph& g, Var logits, std::size_t target) {
  if (target >= g.rows(logits)) {
    throw VocabularyError("nll_loss: target " + std::to_string(target) + " outside " +
                          std::to_string(g.rows(logits)) + " classes");
  }
  return g.neg(g.slice(g.log_softmax(logits), target, 1));
}

/// (pred - target)^2.
inline Var mse_loss(Graph& g, Var pred, double target) {
  Var d = g.add_scalar(pred, -target);
  return g.sum(g.hadamard(d, d));
}

/// Learned log-variances s for the multi-task weighting
/// total = sum_task exp(-s) * L + s, with s kept inside [-10, 10].
struct TaskWeights {
  static constexpr double kClamp = 10.0;
  std::vector<std::string> names;
  std::vector<Parameter> log_vars;

  TaskWeights() = default;
  explicit TaskWeights(std::vector<std::string> tasks) : names(std::move(tasks)) {
    for (const auto& n : names) log_vars.emplace_back("weight." + n, Tensor::scalar(0.0));
  }

  const Parameter* find(const std::string& task) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == task) return &log_vars[i];
    }
    return nullptr;
  }

  /// Projection back into the clamp interval; call after each optimizer step.
  void clamp() {
    for (auto& p : log_vars) p.value.data[0] = std::clamp(p.value.data[0], -kClamp, kClamp);
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& p : log_vars) out.push_back(&p);
    return out;
  }
};

inline bool is_encoder_task(const std::string& task) { return task.rfind("enc.", 0) == 0; }

/// Kendall-style weighted sum. Encoder tasks ("enc.*") are dropped when
/// `encoder_enabled` is false.
inline Var weighted_total_loss(Graph& g, const std::vector<std::pair<std::string, Var>>& per_task, const TaskWeights& w,
                               bool encoder_enabled = true) {
  std::vector<Var> terms;
  for (const auto& [task, loss] : per_task) {
    if (!encoder_enabled && is_encoder_task(task)) continue;
    const Parameter* s = w.find(task);
    if (!s) throw ConfigurationError("weighted_total_loss: no learned weight for task '" + task + "'");
    Var sv = g.param(*s);
    terms.push_back(g.add(g.hadamard(g.exp(g.neg(sv)), loss), sv));
  }
  if (terms.empty()) return g.scalar(0.0);
  return g.sum_all(terms);
}

}  // namespace hera
