#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

#include "loop_pe/eval.hpp"
#include "loop_pe/rng.hpp"
#include "loop_pe/train.hpp"

namespace fs = std::filesystem;
using namespace loop_pe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Binds CLI options to a key=value config file with flag > file > default
// precedence, and renders the fully resolved settings back out so a run
// can be reproduced from its emitted config alone.
class SettingsBinder {
 public:
  void bind(CLI::App* app, const std::string& flag, const std::string& key,
            std::string& var, const std::string& desc) {
    auto* opt = app->add_option(flag, var, desc);
    entries_.push_back({key, opt, [&var](const std::string& s) { var = s; },
                        [&var] { return var; }});
  }
  void bind(CLI::App* app, const std::string& flag, const std::string& key, double& var,
            const std::string& desc) {
    auto* opt = app->add_option(flag, var, desc);
    entries_.push_back({key, opt, [&var](const std::string& s) { var = std::stod(s); },
                        [&var] { return format_double(var); }});
  }
  template <typename T>
    requires std::is_unsigned_v<T>
  void bind(CLI::App* app, const std::string& flag, const std::string& key, T& var,
            const std::string& desc) {
    auto* opt = app->add_option(flag, var, desc);
    entries_.push_back({key, opt,
                        [&var](const std::string& s) { var = static_cast<T>(std::stoull(s)); },
                        [&var] { return std::to_string(var); }});
  }

  // File values fill in everything the command line did not set.
  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not readable: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto strip = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      line = strip(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                    ": expected key=value");
      kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    for (auto& e : entries_) {
      if (e.option->count() > 0) continue;  // explicit flag wins
      const auto it = kv.find(e.key);
      if (it != kv.end()) e.set(it->second);
    }
  }

  std::string resolved() const {
    std::string out;
    for (const auto& e : entries_) out += e.key + " = " + e.render() + "\n";
    return out;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<void(const std::string&)> set;
    std::function<std::string()> render;
  };
  std::vector<Entry> entries_;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("LOOP_PE_THREADS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void emit_resolved(const SettingsBinder& binder, const std::string& command,
                   const std::string& out_dir) {
  const std::string body = binder.resolved();
  if (out_dir.empty()) {
    std::cout << "# resolved config (" << command << ")\n" << body;
  } else {
    write_text(fs::path(out_dir) / (command + ".resolved.cfg"), body);
  }
}

struct GenDataArgs {
  std::string out, config;
  DatasetSpec spec;
  std::size_t threads = default_threads();
  SettingsBinder binder;
};

struct TrainArgs {
  std::string data, out, config;
  std::string loss_mode = "objective";
  TrainConfig train_cfg;
  ModelConfig model_cfg;
  SettingsBinder binder;
};

struct EvalArgs {
  std::string model, data, out, config;
  std::size_t reps = 5;
  SettingsBinder binder;
};

struct VerifyArgs {
  std::string model, data, out, config;
  std::size_t permutations = 100;
  std::uint64_t seed = 0;
  SettingsBinder binder;
};

// Required settings may arrive via flag or config file, so the check runs
// after the merge.
void require_setting(const std::string& value, const char* flag) {
  if (value.empty())
    throw std::invalid_argument(std::string(flag) +
                                " is required (flag or config file)");
}

std::vector<Sample> load_split(const std::string& data_dir, const char* split) {
  const fs::path path = fs::path(data_dir) / (std::string(split) + ".jsonl");
  if (!fs::exists(path))
    throw std::runtime_error("dataset file missing: " + path.string());
  auto samples = load_samples(path.string());
  if (samples.empty())
    throw std::runtime_error("dataset file has no samples: " + path.string());
  return samples;
}

int run_gen_data(GenDataArgs& a) {
  require_setting(a.out, "--out");
  a.spec.validate();
  fs::create_directories(a.out);
  const Dataset ds = generate_dataset(a.spec, a.threads);
  save_samples(ds.train, (fs::path(a.out) / "train.jsonl").string());
  save_samples(ds.test, (fs::path(a.out) / "test.jsonl").string());
  save_dataset_spec(a.spec, (fs::path(a.out) / "dataset_spec.json").string());
  emit_resolved(a.binder, "gen-data", a.out);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
            << " test samples to " << a.out << "\n";
  if (ds.rejected_infeasible || ds.rejected_margin)
    std::cout << "resampled " << ds.rejected_infeasible << " infeasible and "
              << ds.rejected_margin << " margin-thin draws\n";
  return kExitOk;
}

int run_train(TrainArgs& a) {
  require_setting(a.data, "--data");
  require_setting(a.out, "--out");
  a.train_cfg.loss_mode = loss_mode_from_string(a.loss_mode);
  a.train_cfg.validate();
  a.model_cfg.seed = a.train_cfg.seed;  // one seed drives init and shuffling
  a.model_cfg.validate();
  const auto train_samples = load_split(a.data, "train");
  fs::create_directories(a.out);

  Model model = init_model(a.model_cfg);
  const TrainLog log = train(model, train_samples, a.train_cfg);
  save_checkpoint(model, (fs::path(a.out) / "model.ckpt").string());
  save_loss_log(log, (fs::path(a.out) / "loss_log.csv").string());
  emit_resolved(a.binder, "train", a.out);
  std::cout << "trained " << a.train_cfg.epochs << " epochs on " << train_samples.size()
            << " samples";
  if (!log.epoch_loss.empty())
    std::cout << "; loss " << format_double(log.epoch_loss.front()) << " -> "
              << format_double(log.epoch_loss.back());
  std::cout << "\n";
  return kExitOk;
}

int run_eval(EvalArgs& a) {
  require_setting(a.model, "--model");
  require_setting(a.data, "--data");
  require_setting(a.out, "--out");
  const Model model = load_checkpoint(a.model);
  const auto test_samples = load_split(a.data, "test");
  fs::create_directories(a.out);

  const EvalReport report = evaluate(model, test_samples, a.reps);
  save_eval_rows(report, (fs::path(a.out) / "eval_rows.csv").string());
  save_eval_summary(report, (fs::path(a.out) / "eval_summary.json").string());
  const SpectrumExport spectrum = make_spectrum(model, test_samples);
  export_spectrum(spectrum, (fs::path(a.out) / "spectrum.csv").string(),
                  (fs::path(a.out) / "spectrum.svg").string());
  emit_resolved(a.binder, "eval", a.out);
  std::cout << "gap avg/min/max = " << report.gap_avg << " / " << report.gap_min
            << " / " << report.gap_max << "; worst feasibility violation = "
            << report.feas_max << " kW\n";
  return kExitOk;
}

int run_bench(EvalArgs& a) {
  require_setting(a.model, "--model");
  require_setting(a.data, "--data");
  const Model model = load_checkpoint(a.model);
  const auto test_samples = load_split(a.data, "test");
  const EvalReport report = evaluate(model, test_samples, a.reps);
  const std::string table = format_bench_table(report);
  std::cout << table;
  std::cout << "timer floor: " << report.timer_floor_ms << " ms (no-op closure)\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "bench_table.csv", table);
  }
  emit_resolved(a.binder, "bench", a.out);
  return kExitOk;
}

int run_verify(VerifyArgs& a) {
  require_setting(a.model, "--model");
  require_setting(a.data, "--data");
  const Model model = load_checkpoint(a.model);
  const auto test_samples = load_split(a.data, "test");
  Rng rng(a.seed);

  std::size_t checked = 0;
  double worst_equivariance = 0.0;
  for (std::size_t k = 0; k < a.permutations; ++k) {
    const Sample& s = test_samples[k % test_samples.size()];
    const std::size_t n = s.instance.n();
    const Permutation sigma = Permutation::random(n, rng);
    const Decision direct = apply(model, sigma.apply(s.instance));
    const Decision routed = sigma.apply(apply(model, s.instance));
    double scale = 1.0, dev = 0.0;
    for (double x : routed) scale = std::max(scale, std::fabs(x));
    for (std::size_t i = 0; i < n; ++i)
      dev = std::max(dev, std::fabs(direct[i] - routed[i]));
    worst_equivariance = std::max(worst_equivariance, dev / scale);
    ++checked;
  }
  const bool equivariance_ok = worst_equivariance <= 1e-9;

  double worst_feas = 0.0;
  for (const auto& s : test_samples) {
    const Decision u = apply(model, s.instance);
    worst_feas = std::max(
        worst_feas, check_feasibility(build_vpp_constraints(s.instance), s.instance, u));
  }
  const bool feasibility_ok = worst_feas <= 1e-7;

  double worst_scaling = 0.0;
  for (std::size_t k = 0; k < std::min<std::size_t>(50, test_samples.size()); ++k) {
    const Instance& inst = test_samples[k].instance;
    const std::size_t n = inst.n();
    const Permutation sigma = Permutation::random(n, rng);
    VirtualPrediction v(n, 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-30.0, 30.0);
    const ConstraintSystem cs = build_vpp_constraints(inst);
    const GaugeContext ctx = make_gauge_context(cs, inst);
    const Instance perm = sigma.apply(inst);
    const ConstraintSystem perm_cs = build_vpp_constraints(perm);
    const GaugeContext perm_ctx = make_gauge_context(perm_cs, perm);
    const double c = scaling_factor(cs, ctx, v).c;
    const double c_perm = scaling_factor(perm_cs, perm_ctx, sigma.apply_rows(v)).c;
    worst_scaling = std::max(worst_scaling, std::fabs(c - c_perm));
  }
  const bool scaling_ok = worst_scaling <= 1e-12;

  const ScenarioResult scenario =
      scenario_suite(model, test_samples.front().instance, rng.next_u64());

  auto tally = [](const char* name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[pass] " : "[FAIL] ") << name << " (" << detail << ")\n";
    return ok;
  };
  bool all = true;
  all &= tally("equivariance", equivariance_ok,
               std::to_string(checked) + " permutations, worst rel dev " +
                   format_double(worst_equivariance));
  all &= tally("feasibility", feasibility_ok,
               "worst violation " + format_double(worst_feas) + " kW");
  all &= tally("scaling-invariance", scaling_ok,
               "worst |c - c_perm| " + format_double(worst_scaling));
  all &= tally("scenario-reorder", scenario.reorder_ok,
               "rel dev " + format_double(scenario.reorder_deviation));
  all &= tally("scenario-dropout", scenario.dropout_ok,
               "worst violation " + format_double(scenario.dropout_worst_violation));
  all &= tally("scenario-scale-up", scenario.scale_up_ok,
               "violation " + format_double(scenario.scale_up_violation));
  emit_resolved(a.binder, "verify", a.out);
  return all ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"permutation-equivariant neural dispatch with a closed-form feasibility layer"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate and label a dispatch dataset");
  gen.binder.bind(gen_cmd, "--out", "out", gen.out, "output directory");
  gen.binder.bind(gen_cmd, "--agents", "agents", gen.spec.n_agents_total, "total agents");
  gen.binder.bind(gen_cmd, "--samples", "samples", gen.spec.n_samples, "total samples");
  gen.binder.bind(gen_cmd, "--test", "test", gen.spec.n_test, "test samples");
  gen.binder.bind(gen_cmd, "--seed", "seed", gen.spec.seed, "generator seed");
  gen.binder.bind(gen_cmd, "--subset-min", "subset_min", gen.spec.subset_min,
                  "smallest active subset");
  gen.binder.bind(gen_cmd, "--subset-max", "subset_max", gen.spec.subset_max,
                  "largest active subset");
  gen.binder.bind(gen_cmd, "--cap-min", "cap_min", gen.spec.capacity_min, "capacity lower bound, kW");
  gen.binder.bind(gen_cmd, "--cap-max", "cap_max", gen.spec.capacity_max, "capacity upper bound, kW");
  gen.binder.bind(gen_cmd, "--demand-min", "demand_min", gen.spec.demand_min, "demand lower bound, kW");
  gen.binder.bind(gen_cmd, "--demand-max", "demand_max", gen.spec.demand_max, "demand upper bound, kW");
  gen.binder.bind(gen_cmd, "--p-omax", "p_omax", gen.spec.p_omax, "net-output band, kW");
  gen.binder.bind(gen_cmd, "--fluctuation", "fluctuation", gen.spec.fluctuation,
                  "relative fluctuation");
  gen.binder.bind(gen_cmd, "--threads", "threads", gen.threads, "labeling workers");
  gen_cmd->add_option("--config", gen.config, "key=value settings file");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  tr.binder.bind(train_cmd, "--data", "data", tr.data, "dataset directory");
  tr.binder.bind(train_cmd, "--out", "out", tr.out, "output directory");
  tr.binder.bind(train_cmd, "--loss-mode", "loss_mode", tr.loss_mode,
                 "objective | imitation");
  tr.binder.bind(train_cmd, "--epochs", "epochs", tr.train_cfg.epochs, "training epochs");
  tr.binder.bind(train_cmd, "--lr", "lr", tr.train_cfg.learning_rate, "learning rate");
  tr.binder.bind(train_cmd, "--batch-size", "batch_size", tr.train_cfg.batch_size,
                 "minibatch size");
  tr.binder.bind(train_cmd, "--beta1", "beta1", tr.train_cfg.beta1, "first-moment decay");
  tr.binder.bind(train_cmd, "--beta2", "beta2", tr.train_cfg.beta2, "second-moment decay");
  tr.binder.bind(train_cmd, "--epsilon", "epsilon", tr.train_cfg.epsilon,
                 "optimizer epsilon");
  tr.binder.bind(train_cmd, "--seed", "seed", tr.train_cfg.seed,
                 "seed for init and shuffling");
  tr.binder.bind(train_cmd, "--d-e", "d_e", tr.model_cfg.d_e, "embedding width");
  tr.binder.bind(train_cmd, "--d-k", "d_k", tr.model_cfg.d_k, "key/query width");
  tr.binder.bind(train_cmd, "--d-v", "d_v_attn", tr.model_cfg.d_v_attn,
                 "attention value width");
  tr.binder.bind(train_cmd, "--embed-depth", "embed_depth", tr.model_cfg.embed_depth,
                 "embedding layers");
  tr.binder.bind(train_cmd, "--head-depth", "head_depth", tr.model_cfg.head_depth,
                 "head layers");
  tr.binder.bind(train_cmd, "--attn-depth", "attn_depth", tr.model_cfg.attn_depth,
                 "attention layers");
  train_cmd->add_option("--config", tr.config, "key=value settings file");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev.binder.bind(eval_cmd, "--model", "model", ev.model, "checkpoint path");
  ev.binder.bind(eval_cmd, "--data", "data", ev.data, "dataset directory");
  ev.binder.bind(eval_cmd, "--out", "out", ev.out, "output directory");
  ev.binder.bind(eval_cmd, "--reps", "reps", ev.reps, "timing repetitions");
  eval_cmd->add_option("--config", ev.config, "key=value settings file");

  EvalArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "timing comparison of both methods");
  be.binder.bind(bench_cmd, "--model", "model", be.model, "checkpoint path");
  be.binder.bind(bench_cmd, "--data", "data", be.data, "dataset directory");
  be.binder.bind(bench_cmd, "--out", "out", be.out, "optional output directory");
  be.binder.bind(bench_cmd, "--reps", "reps", be.reps, "timing repetitions");
  bench_cmd->add_option("--config", be.config, "key=value settings file");

  VerifyArgs vf;
  auto* verify_cmd =
      app.add_subcommand("verify", "check equivariance and feasibility properties");
  vf.binder.bind(verify_cmd, "--model", "model", vf.model, "checkpoint path");
  vf.binder.bind(verify_cmd, "--data", "data", vf.data, "dataset directory");
  vf.binder.bind(verify_cmd, "--permutations", "permutations", vf.permutations,
                 "equivariance draws");
  vf.binder.bind(verify_cmd, "--seed", "seed", vf.seed, "property sweep seed");
  vf.binder.bind(verify_cmd, "--out", "out", vf.out, "optional output directory");
  verify_cmd->add_option("--config", vf.config, "key=value settings file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      if (!gen.config.empty()) gen.binder.merge_file(gen.config);
      return run_gen_data(gen);
    }
    if (train_cmd->parsed()) {
      if (!tr.config.empty()) tr.binder.merge_file(tr.config);
      return run_train(tr);
    }
    if (eval_cmd->parsed()) {
      if (!ev.config.empty()) ev.binder.merge_file(ev.config);
      return run_eval(ev);
    }
    if (bench_cmd->parsed()) {
      if (!be.config.empty()) be.binder.merge_file(be.config);
      return run_bench(be);
    }
    if (verify_cmd->parsed()) {
      if (!vf.config.empty()) vf.binder.merge_file(vf.config);
      return run_verify(vf);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
