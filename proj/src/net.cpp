#include "loop_pe/net.hpp"

#include <cmath>
#include <stdexcept>

#include "loop_pe/rng.hpp"

namespace loop_pe {

void ModelConfig::validate() const {
  if (d_x < 1 || d_e < 1 || d_k < 1 || d_v_attn < 1 || d_u < 1)
    throw std::invalid_argument("model config: widths must be >= 1");
  if (embed_depth < 1 || head_depth < 1 || attn_depth < 1)
    throw std::invalid_argument("model config: depths must be >= 1");
  if (activation != "relu")
    throw std::invalid_argument("model config: unknown activation '" + activation + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t count = 0;
  for (const auto& [name, t] : named_parameters()) count += t->size();
  return count;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  auto add = [&](const std::string& prefix, const std::vector<Tensor>& ts,
                 const char* kind) {
    for (std::size_t i = 0; i < ts.size(); ++i)
      out.emplace_back(prefix + "." + std::to_string(i) + "." + kind, &ts[i]);
  };
  add("embed", embed_weights, "weight");
  add("embed", embed_biases, "bias");
  add("attn", attn_query, "w_query");
  add("attn", attn_key, "w_key");
  add("attn", attn_value, "w_value");
  add("head", head_weights, "weight");
  add("head", head_biases, "bias");
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add = [&](const std::string& prefix, std::vector<Tensor>& ts, const char* kind) {
    for (std::size_t i = 0; i < ts.size(); ++i)
      out.emplace_back(prefix + "." + std::to_string(i) + "." + kind, &ts[i]);
  };
  add("embed", embed_weights, "weight");
  add("embed", embed_biases, "bias");
  add("attn", attn_query, "w_query");
  add("attn", attn_key, "w_key");
  add("attn", attn_value, "w_value");
  add("head", head_weights, "weight");
  add("head", head_biases, "bias");
  return out;
}

namespace {

std::size_t embed_in_width(const ModelConfig& c, std::size_t layer) {
  return layer == 0 ? c.d_x : c.d_e;
}
std::size_t attn_in_width(const ModelConfig& c, std::size_t layer) {
  return layer == 0 ? c.d_e : c.d_v_attn;
}
std::size_t head_in_width(const ModelConfig& c, std::size_t layer) {
  return layer == 0 ? c.d_e + c.d_v_attn : c.d_e;
}
std::size_t head_out_width(const ModelConfig& c, std::size_t layer) {
  return layer + 1 == c.head_depth ? c.d_u : c.d_e;
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

Model init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Model m;
  m.config = config;
  for (std::size_t l = 0; l < config.embed_depth; ++l) {
    m.embed_weights.push_back(glorot(rng, embed_in_width(config, l), config.d_e));
    m.embed_biases.push_back(Tensor(1, config.d_e));
  }
  for (std::size_t l = 0; l < config.attn_depth; ++l) {
    const std::size_t in = attn_in_width(config, l);
    m.attn_query.push_back(glorot(rng, in, config.d_k));
    m.attn_key.push_back(glorot(rng, in, config.d_k));
    m.attn_value.push_back(glorot(rng, in, config.d_v_attn));
  }
  for (std::size_t l = 0; l < config.head_depth; ++l) {
    m.head_weights.push_back(
        glorot(rng, head_in_width(config, l), head_out_width(config, l)));
    m.head_biases.push_back(Tensor(1, head_out_width(config, l)));
  }
  return m;
}

ModelOnTape push_parameters(Tape& tape, const Model& model) {
  ModelOnTape p;
  auto push_all = [&](const std::vector<Tensor>& ts, std::vector<NodeId>& ids) {
    for (const Tensor& t : ts) {
      ids.push_back(tape.leaf(t));
      p.all.push_back(ids.back());
    }
  };
  push_all(model.embed_weights, p.embed_weights);
  push_all(model.embed_biases, p.embed_biases);
  push_all(model.attn_query, p.attn_query);
  push_all(model.attn_key, p.attn_key);
  push_all(model.attn_value, p.attn_value);
  push_all(model.head_weights, p.head_weights);
  push_all(model.head_biases, p.head_biases);
  return p;
}

NodeId embed_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                     NodeId x) {
  if (tape.value(x).cols() != cfg.d_x)
    throw std::invalid_argument("embed: feature width " + tape.value(x).shape_str() +
                                " does not match configured d_x=" +
                                std::to_string(cfg.d_x));
  NodeId h = x;
  for (std::size_t l = 0; l < cfg.embed_depth; ++l) {
    h = tape.add_rowvec(tape.matmul(h, params.embed_weights[l]), params.embed_biases[l]);
    h = tape.relu(h);
  }
  return h;
}

NodeId attend_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                      NodeId e) {
  NodeId h = e;
  for (std::size_t l = 0; l < cfg.attn_depth; ++l) {
    const NodeId q = tape.matmul(h, params.attn_query[l]);
    const NodeId k = tape.matmul(h, params.attn_key[l]);
    const NodeId v = tape.matmul(h, params.attn_value[l]);
    const NodeId scores =
        tape.mul_scalar(tape.matmul(q, tape.transpose(k)),
                        1.0 / std::sqrt(static_cast<double>(cfg.d_k)));
    const NodeId weights = tape.softmax_rows(scores);
    h = tape.matmul(weights, v);
  }
  return h;
}

NodeId forward_on_tape(Tape& tape, const ModelConfig& cfg, const ModelOnTape& params,
                       NodeId x) {
  if (tape.value(x).rows() < 1)
    throw std::invalid_argument("forward: needs at least one agent row");
  const NodeId e = embed_on_tape(tape, cfg, params, x);
  const NodeId att = attend_on_tape(tape, cfg, params, e);
  // Rowwise head over [embedding | attention]; the embedding row carries
  // the agent's own features past the attention mixing.
  NodeId h = tape.concat_cols(e, att);
  for (std::size_t l = 0; l < cfg.head_depth; ++l) {
    h = tape.add_rowvec(tape.matmul(h, params.head_weights[l]), params.head_biases[l]);
    if (l + 1 < cfg.head_depth) h = tape.relu(h);
  }
  return h;
}

Tensor embed(const Model& model, const Tensor& x) {
  Tape tape;
  const auto params = push_parameters(tape, model);
  return tape.value(embed_on_tape(tape, model.config, params, tape.leaf(x)));
}

Tensor attend(const Model& model, const Tensor& e) {
  Tape tape;
  const auto params = push_parameters(tape, model);
  return tape.value(attend_on_tape(tape, model.config, params, tape.leaf(e)));
}

VirtualPrediction forward(const Model& model, const Tensor& x) {
  Tape tape;
  const auto params = push_parameters(tape, model);
  return tape.value(forward_on_tape(tape, model.config, params, tape.leaf(x)));
}

}  // namespace loop_pe
