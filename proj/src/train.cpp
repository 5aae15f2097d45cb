#include "loop_pe/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "loop_pe/gauge.hpp"
#include "loop_pe/rng.hpp"

namespace loop_pe {

using nlohmann::json;

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "objective") return LossMode::objective;
  if (s == "imitation") return LossMode::imitation;
  throw std::invalid_argument("unknown loss mode '" + s + "'");
}

std::string to_string(LossMode mode) {
  return mode == LossMode::objective ? "objective" : "imitation";
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
}

LossGraph build_loss_graph(const Model& model, const std::vector<Sample>& batch,
                           LossMode mode) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");

  LossGraph g;
  g.params = push_parameters(g.tape, model);

  NodeId total = -1;
  for (const Sample& sample : batch) {
    const Instance& inst = sample.instance;
    const NodeId x = g.tape.leaf(instance_features(inst));
    const NodeId v = forward_on_tape(g.tape, model.config, g.params, x);

    const ConstraintSystem cs = build_vpp_constraints(inst);
    const GaugeContext ctx = make_gauge_context(cs, inst);
    const NodeId u = gauge_map_on_tape(g.tape, cs, ctx, v);

    NodeId target;
    if (mode == LossMode::objective) {
      Tensor caps(inst.n(), 1);
      for (std::size_t i = 0; i < inst.n(); ++i) caps[i] = inst.agents[i].p_c;
      target = g.tape.leaf(std::move(caps));
    } else {
      if (sample.label.status != SolveStatus::optimal)
        throw std::invalid_argument("loss: imitation mode needs an optimal label on sample " +
                                    std::to_string(sample.sample_id));
      Tensor star(inst.n(), 1);
      for (std::size_t i = 0; i < inst.n(); ++i) star[i] = sample.label.u_star[i];
      target = g.tape.leaf(std::move(star));
    }
    const NodeId sample_loss = g.tape.sum_all(g.tape.square(g.tape.sub(u, target)));
    if (!std::isfinite(g.tape.value(sample_loss)[0]))
      throw std::runtime_error("loss: non-finite value on sample " +
                               std::to_string(sample.sample_id));
    total = total < 0 ? sample_loss : g.tape.add(total, sample_loss);
  }
  g.loss_node = g.tape.mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
  g.loss_value = g.tape.value(g.loss_node)[0];
  return g;
}

double loss(const Model& model, const std::vector<Sample>& batch, LossMode mode) {
  return build_loss_graph(model, batch, mode).loss_value;
}

double train_step(Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg,
                  AdamState& state) {
  cfg.validate();
  LossGraph g = build_loss_graph(model, batch, cfg.loss_mode);
  const GradientSet grads = g.tape.backward(g.loss_node);

  auto params = model.named_parameters();
  if (state.m.empty()) {
    for (auto& [name, t] : params) {
      state.m.emplace_back(t->rows(), t->cols());
      state.v.emplace_back(t->rows(), t->cols());
    }
  }
  if (state.m.size() != params.size())
    throw std::logic_error("train_step: optimizer state does not match the model");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].second;
    const Tensor& grad = grads.at(g.params.all[p]);
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  return g.loss_value;
}

TrainLog train(Model& model, const std::vector<Sample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  Rng rng(cfg.seed);
  AdamState state;
  TrainLog log;
  log.epoch_loss.reserve(cfg.epochs);

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Sample> batch;
      batch.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) batch.push_back(data[order[k]]);
      epoch_sum += train_step(model, batch, cfg, state);
      ++steps;
    }
    log.epoch_loss.push_back(epoch_sum / static_cast<double>(steps));
  }
  return log;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"d_x", c.d_x},
              {"d_e", c.d_e},
              {"d_k", c.d_k},
              {"d_v_attn", c.d_v_attn},
              {"d_u", c.d_u},
              {"embed_depth", c.embed_depth},
              {"head_depth", c.head_depth},
              {"attn_depth", c.attn_depth},
              {"activation", c.activation},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_x = j.at("d_x").get<std::size_t>();
  c.d_e = j.at("d_e").get<std::size_t>();
  c.d_k = j.at("d_k").get<std::size_t>();
  c.d_v_attn = j.at("d_v_attn").get<std::size_t>();
  c.d_u = j.at("d_u").get<std::size_t>();
  c.embed_depth = j.at("embed_depth").get<std::size_t>();
  c.head_depth = j.at("head_depth").get<std::size_t>();
  c.attn_depth = j.at("attn_depth").get<std::size_t>();
  c.activation = j.at("activation").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  json params = json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    params[name] = {{"shape", {t->rows(), t->cols()}}, {"values", t->values()}};
  }
  const json doc = {{"format_version", 1},
                    {"model_config", config_to_json(model.config)},
                    {"parameters", params}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << doc.dump(2) << "\n";
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint: " + path + " is malformed: " + e.what());
  }
  if (!doc.contains("format_version") || doc.at("format_version").get<int>() != 1)
    throw std::runtime_error("checkpoint: " + path + " has unsupported format_version");

  Model skeleton = init_model(config_from_json(doc.at("model_config")));
  const json& params = doc.at("parameters");
  for (auto& [name, t] : skeleton.named_parameters()) {
    if (!params.contains(name))
      throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const json& p = params.at(name);
    const auto shape = p.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != t->rows() || shape[1] != t->cols())
      throw std::runtime_error("checkpoint: parameter '" + name + "' has wrong shape");
    auto values = p.at("values").get<std::vector<double>>();
    if (values.size() != t->size())
      throw std::runtime_error("checkpoint: parameter '" + name + "' has wrong length");
    *t = Tensor(shape[0], shape[1], std::move(values));
    if (!t->all_finite())
      throw std::runtime_error("checkpoint: parameter '" + name + "' has non-finite values");
  }
  return skeleton;
}

void save_loss_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("loss log: cannot write " + path);
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e, log.epoch_loss[e]);
    out << buf;
  }
}

}  // namespace loop_pe
