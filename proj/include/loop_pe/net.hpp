#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loop_pe/tape.hpp"
#include "loop_pe/tensor.hpp"

namespace loop_pe {

struct ModelConfig {
  std::size_t d_x = 2;       // input feature width
  std::size_t d_e = 64;      // embedding width
  std::size_t d_k = 64;      // key/query width
  std::size_t d_v_attn = 64; // attention value width
  std::size_t d_u = 1;       // decision width per agent
  std::size_t embed_depth = 2;
  std::size_t head_depth = 2;
  std::size_t attn_depth = 1;
  std::string activation = "relu";
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Learned parameters. Shared across agents: nothing here depends on the
/// agent count or on agent order.
struct Model {
  ModelConfig config;
  std::vector<Tensor> embed_weights;  // layer l: in x d_e
  std::vector<Tensor> embed_biases;   // 1 x d_e
  std::vector<Tensor> attn_query;     // in x d_k
  std::vector<Tensor> attn_key;       // in x d_k
  std::vector<Tensor> attn_value;     // in x d_v_attn
  std::vector<Tensor> head_weights;
  std::vector<Tensor> head_biases;

  std::size_t parameter_count() const;
  /// Stable name -> tensor view, in deterministic order.
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

/// Per-agent raw outputs of the optimality stage, one row per agent.
using VirtualPrediction = Tensor;  // n x d_u

/// Uniform init in +-sqrt(6/(fan_in+fan_out)), biases zero, deterministic
/// from config.seed.
Model init_model(const ModelConfig& config);

/// Leaf ids of all parameters pushed onto a tape, ordered like
/// named_parameters().
struct ModelOnTape {
  std::vector<NodeId> embed_weights, embed_biases;
  std::vector<NodeId> attn_query, attn_key, attn_value;
  std::vector<NodeId> head_weights, head_biases;
  std::vector<NodeId> all;
};
ModelOnTape push_parameters(Tape& tape, const Model& model);

NodeId embed_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                     NodeId x);
NodeId attend_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                      NodeId e);
NodeId forward_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                       NodeId x);

/// Shared rowwise embedding, one row per agent.
Tensor embed(const Model& model, const Tensor& x);
/// Single self-attention pass over embedded rows (no positional input).
Tensor attend(const Model& model, const Tensor& e);
/// Full optimality stage: embedding, attention stack, shared head over the
/// attention row concatenated with the embedding row.
VirtualPrediction forward(const Model& model, const Tensor& x);

}  // namespace loop_pe
