#include "loop_pe/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "loop_pe/gauge.hpp"
#include "loop_pe/rng.hpp"

namespace loop_pe {

using nlohmann::json;

void DatasetSpec::validate() const {
  if (n_agents_total < 1) throw std::invalid_argument("dataset spec: need at least 1 agent");
  if (n_test >= n_samples)
    throw std::invalid_argument("dataset spec: n_test must be smaller than n_samples");
  if (!(capacity_min > 0.0 && capacity_max >= capacity_min))
    throw std::invalid_argument("dataset spec: invalid capacity range");
  if (!(demand_min >= 0.0 && demand_max >= demand_min))
    throw std::invalid_argument("dataset spec: invalid demand range");
  if (!(p_omax > 0.0)) throw std::invalid_argument("dataset spec: p_omax must be > 0");
  if (!(fluctuation >= 0.0 && fluctuation < 1.0))
    throw std::invalid_argument("dataset spec: fluctuation must lie in [0, 1)");
  if (subset_min < 1 || subset_min > subset_max || subset_max > n_agents_total)
    throw std::invalid_argument(
        "dataset spec: subset bounds must satisfy 1 <= subset_min <= subset_max <= agents");
}

Dataset generate_dataset(const DatasetSpec& spec, std::size_t threads) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<double> base_pc(spec.n_agents_total), base_pd(spec.n_agents_total);
  for (std::size_t i = 0; i < spec.n_agents_total; ++i) {
    base_pc[i] = rng.uniform(spec.capacity_min, spec.capacity_max);
    base_pd[i] = rng.uniform(spec.demand_min, spec.demand_max);
  }

  auto agent_name = [](std::size_t i) {
    std::string s = std::to_string(i);
    if (s.size() < 2) s.insert(s.begin(), '0');
    return "agent_" + s;
  };

  Dataset ds;
  ds.spec = spec;
  ds.train.reserve(spec.n_samples - spec.n_test);
  ds.test.reserve(spec.n_test);

  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    Sample sample;
    sample.sample_id = s;
    while (true) {
      const std::size_t k =
          static_cast<std::size_t>(rng.uniform_int(spec.subset_min, spec.subset_max));
      auto idx = rng.sample_indices(spec.n_agents_total, k);
      std::sort(idx.begin(), idx.end());

      Instance inst;
      inst.p_omax = spec.p_omax;
      inst.agents.reserve(k);
      for (std::size_t i : idx) {
        AgentRecord a;
        a.agent_id = agent_name(i);
        a.p_c = base_pc[i] * (1.0 + rng.uniform(-spec.fluctuation, spec.fluctuation));
        a.p_d = base_pd[i] * (1.0 + rng.uniform(-spec.fluctuation, spec.fluctuation));
        inst.agents.push_back(std::move(a));
      }

      if (instance_infeasible(inst)) {
        ++ds.rejected_infeasible;
        continue;
      }
      // The whole pipeline needs a strictly interior anchor, so draws that
      // are feasible but thinner than the gauge margin are resampled too.
      try {
        interior_point(inst);
      } catch (const std::runtime_error&) {
        ++ds.rejected_margin;
        continue;
      }
      sample.instance = std::move(inst);
      break;
    }
    auto& bucket = (s < spec.n_samples - spec.n_test) ? ds.train : ds.test;
    bucket.push_back(std::move(sample));
  }

  // Labeling is a pure function of each instance, so it can fan out.
  std::vector<Sample*> all;
  all.reserve(spec.n_samples);
  for (auto& s : ds.train) all.push_back(&s);
  for (auto& s : ds.test) all.push_back(&s);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, all.size()));
  if (workers == 1) {
    for (Sample* s : all) s->label = solve_exact(s->instance);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < all.size(); i = next.fetch_add(1))
          all[i]->label = solve_exact(all[i]->instance);
      });
    }
    for (auto& t : pool) t.join();
  }
  return ds;
}

namespace {

json sample_to_json(const Sample& s) {
  json agents = json::array();
  for (const auto& a : s.instance.agents)
    agents.push_back({{"agent_id", a.agent_id}, {"p_c", a.p_c}, {"p_d", a.p_d}});
  json label = {
      {"u_star", s.label.u_star},
      {"dual_lambda", s.label.dual_lambda},
      {"status", s.label.status == SolveStatus::optimal ? "optimal" : "infeasible"},
  };
  return json{{"sample_id", s.sample_id},
              {"p_omax", s.instance.p_omax},
              {"agents", agents},
              {"label", label}};
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.sample_id = j.at("sample_id").get<std::size_t>();
  s.instance.p_omax = j.at("p_omax").get<double>();
  for (const auto& a : j.at("agents")) {
    AgentRecord rec;
    rec.agent_id = a.at("agent_id").get<std::string>();
    rec.p_c = a.at("p_c").get<double>();
    rec.p_d = a.at("p_d").get<double>();
    s.instance.agents.push_back(std::move(rec));
  }
  const json& label = j.at("label");
  s.label.u_star = label.at("u_star").get<std::vector<double>>();
  s.label.dual_lambda = label.at("dual_lambda").get<double>();
  const std::string status = label.at("status").get<std::string>();
  if (status == "optimal")
    s.label.status = SolveStatus::optimal;
  else if (status == "infeasible")
    s.label.status = SolveStatus::infeasible;
  else
    throw std::runtime_error("dataset: unknown label status '" + status + "'");
  return s;
}

}  // namespace

void save_samples(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write " + path);
  for (const auto& s : samples) out << sample_to_json(s).dump() << "\n";
}

std::vector<Sample> load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<Sample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error("dataset: " + path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return samples;
}

void save_dataset_spec(const DatasetSpec& spec, const std::string& path) {
  json j = {
      {"n_agents_total", spec.n_agents_total},
      {"n_samples", spec.n_samples},
      {"n_test", spec.n_test},
      {"capacity_min", spec.capacity_min},
      {"capacity_max", spec.capacity_max},
      {"demand_min", spec.demand_min},
      {"demand_max", spec.demand_max},
      {"p_omax", spec.p_omax},
      {"fluctuation", spec.fluctuation},
      {"subset_min", spec.subset_min},
      {"subset_max", spec.subset_max},
      {"seed", spec.seed},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write " + path);
  out << j.dump(2) << "\n";
}

DatasetSpec load_dataset_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset spec: " + path + ": " + e.what());
  }
  DatasetSpec spec;
  spec.n_agents_total = j.at("n_agents_total").get<std::size_t>();
  spec.n_samples = j.at("n_samples").get<std::size_t>();
  spec.n_test = j.at("n_test").get<std::size_t>();
  spec.capacity_min = j.at("capacity_min").get<double>();
  spec.capacity_max = j.at("capacity_max").get<double>();
  spec.demand_min = j.at("demand_min").get<double>();
  spec.demand_max = j.at("demand_max").get<double>();
  spec.p_omax = j.at("p_omax").get<double>();
  spec.fluctuation = j.at("fluctuation").get<double>();
  spec.subset_min = j.at("subset_min").get<std::size_t>();
  spec.subset_max = j.at("subset_max").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

}  // namespace loop_pe
