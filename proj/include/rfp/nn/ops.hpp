#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rfp/nn/graph.hpp"
#include "rfp/nn/kernels.hpp"
#include "rfp/rng.hpp"

namespace rfp::nn {

/// Running batch-norm estimates; mutated only by train-mode forwards.
struct BnState {
  Tensord running_mean;
  Tensord running_var;

  explicit BnState(int channels = 0) {
    if (channels > 0) {
      running_mean = Tensord::zeros({channels});
      running_var = Tensord::full({channels}, 1.0);
    }
  }
};

Var conv2d(Tape& tape, Var x, Var w, Var b, const ConvSpec& spec);
Var dense(Tape& tape, Var x, Var w, Var b);
Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, BnState& state, Mode mode,
               double momentum = 0.1, double eps = 1e-5);
Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
std::pair<Var, Var> channel_pool(Tape& tape, Var x);  // (avg, max)
Var concat_channels(Tape& tape, const std::vector<Var>& parts);
Var broadcast_mul(Tape& tape, Var mask, Var x);
Var area_resize(Tape& tape, Var x, int out_h, int out_w);
Var global_avg_pool(Tape& tape, Var x);
Var flatten_spatial(Tape& tape, Var x);  // [B,C,H,W] -> [B,C*H*W]
Var add(Tape& tape, Var a, Var b);
Var softmax_cross_entropy_loss(Tape& tape, Var logits, std::vector<int> labels);

/// Named leaves of a model: trainable parameters plus non-trainable buffers
/// (running statistics). Iteration order is the lexicographic name order, so
/// optimizer updates and checkpoints are deterministic.
class ParamStore {
 public:
  Var add(const std::string& name, Tensord init);
  void add_buffer(const std::string& name, Tensord* buffer);

  const std::map<std::string, Var>& trainable() const { return trainable_; }
  const std::map<std::string, Tensord*>& buffers() const { return buffers_; }

  Var find(const std::string& name) const;
  void zero_grads();
  std::int64_t parameter_count() const;

  /// Deep copy of all current values (for best-epoch snapshots).
  std::map<std::string, Tensord> snapshot_values() const;
  void restore_values(const std::map<std::string, Tensord>& snap);

 private:
  std::map<std::string, Var> trainable_;
  std::map<std::string, Tensord*> buffers_;
};

/// Centered-uniform fan-in init (He-style): U(-b, b), b = sqrt(6/fan_in),
/// optionally shrunk by `scale`.
Tensord he_uniform(std::vector<int> shape, int fan_in, Rng& rng, double scale = 1.0);

}  // namespace rfp::nn
