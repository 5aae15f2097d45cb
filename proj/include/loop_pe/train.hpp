#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loop_pe/dataset.hpp"
#include "loop_pe/net.hpp"

namespace loop_pe {

enum class LossMode { objective, imitation };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode mode);

struct TrainConfig {
  LossMode loss_mode = LossMode::objective;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mean loss of the model over a batch.
///   objective: mean of sum (u^i - p_c^i)^2 through the feasible map
///   imitation: mean of ||u - u*||^2
double loss(const Model& model, const std::vector<Sample>& batch, LossMode mode);

/// Loss with the full computation graph retained, for training and for
/// gradient checks.
struct LossGraph {
  Tape tape;
  ModelOnTape params;
  NodeId loss_node = -1;
  double loss_value = 0.0;
};
LossGraph build_loss_graph(const Model& model, const std::vector<Sample>& batch,
                           LossMode mode);

/// Bias-corrected first/second moment accumulators.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One optimizer update in place; returns the pre-update batch loss.
/// Throws on non-finite loss, naming the offending sample.
double train_step(Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg,
                  AdamState& state);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean of minibatch losses per epoch
};

/// Full loop: deterministic per-epoch shuffle, sequential minibatches.
TrainLog train(Model& model, const std::vector<Sample>& data, const TrainConfig& cfg);

/// Checkpoints round-trip bitwise: every parameter and the full config.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

void save_loss_log(const TrainLog& log, const std::string& path);

}  // namespace loop_pe
