#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loop_pe/oracle.hpp"
#include "loop_pe/problem.hpp"

namespace loop_pe {

struct DatasetSpec {
  std::size_t n_agents_total = 20;
  std::size_t n_samples = 400;  // total; n_test of them become the test split
  std::size_t n_test = 100;
  double capacity_min = 10.0;  // kW
  double capacity_max = 25.0;
  double demand_min = 5.0;
  double demand_max = 20.0;
  double p_omax = 100.0;
  double fluctuation = 0.10;  // relative
  std::size_t subset_min = 10;
  std::size_t subset_max = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::size_t sample_id = 0;
  Instance instance;
  OracleSolution label;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::size_t rejected_infeasible = 0;
  std::size_t rejected_margin = 0;
};

/// Draws base capacities/demands once per agent, then per sample a random
/// active subset with a relative fluctuation on each active agent's
/// values, labeled by the exact solver. Deterministic given spec.seed:
/// draws are sequential, only the pure labeling step fans out over
/// `threads` workers.
Dataset generate_dataset(const DatasetSpec& spec, std::size_t threads = 1);

/// Line-delimited records, one sample per line.
void save_samples(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> load_samples(const std::string& path);

void save_dataset_spec(const DatasetSpec& spec, const std::string& path);
DatasetSpec load_dataset_spec(const std::string& path);

}  // namespace loop_pe
