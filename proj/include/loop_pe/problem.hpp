#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "loop_pe/tensor.hpp"

namespace loop_pe {

struct AgentRecord {
  std::string agent_id;
  double p_c = 0.0;  // generation capacity, kW
  double p_d = 0.0;  // load demand, kW
};

/// One optimization scene: the active agents plus the net-output limit.
struct Instance {
  std::vector<AgentRecord> agents;
  double p_omax = 0.0;  // kW

  std::size_t n() const { return agents.size(); }
  void validate() const;
};

/// Per-agent dispatch values, agent-major, d_u entries per agent. For the
/// power-plant case d_u = 1 and this is simply one value per agent.
using Decision = std::vector<double>;

/// Bijective index map over 0..n-1. perm[k] is the source index of the
/// k-th entry after reordering.
class Permutation {
 public:
  explicit Permutation(std::vector<std::size_t> map);
  static Permutation identity(std::size_t n);
  static Permutation random(std::size_t n, class Rng& rng);

  std::size_t size() const { return map_.size(); }
  std::size_t operator[](std::size_t k) const { return map_[k]; }
  Permutation inverse() const;

  Instance apply(const Instance& inst) const;
  Decision apply(const Decision& u, std::size_t d_u = 1) const;
  Tensor apply_rows(const Tensor& t) const;

 private:
  std::vector<std::size_t> map_;
};

/// Summation-form linear constraint system
///   per agent:  H_loc u^i <= h_loc(x^i)
///   coupled:    sum_i H_cpl u^i <= sum_i h_cpl(x^i) + g
/// plus optional per-agent equality rows A_eq u^i + b_eq(x^i) = 0.
/// Invariant: the row templates are shared by every agent, only
/// right-hand sides depend on x^i; the system is permutation-symmetric.
struct ConstraintSystem {
  std::size_t d_u = 1;

  Tensor local_template;                          // r_loc x d_u
  std::vector<std::vector<double>> local_rhs;     // per agent, r_loc values

  Tensor coupled_template;                        // r_cpl x d_u
  std::vector<std::vector<double>> coupled_rhs;   // per agent, r_cpl values
  std::vector<double> coupled_offset;             // g, r_cpl values

  Tensor equality_template;                       // r_eq x d_u (may be empty)
  std::vector<std::vector<double>> equality_rhs;  // per agent, r_eq values

  std::size_t n_agents() const { return local_rhs.size(); }
  std::size_t local_rows() const { return local_template.rows(); }
  std::size_t coupled_rows() const { return coupled_template.rows(); }
  bool has_equalities() const { return equality_template.rows() > 0; }
};

/// Affine change of variables u^i = p^i + N z^i produced by equality
/// elimination. Identity when there were no equality rows.
struct Reparameterization {
  bool is_identity = true;
  Tensor null_basis;                              // d_u x d_z
  std::vector<std::vector<double>> particular;    // per agent, d_u values

  std::size_t d_z() const { return null_basis.cols(); }
  Decision to_original(const Decision& z) const;
};

/// VPP dispatch rows: per agent u^i <= p_c^i and -u^i <= 0; coupled
/// sum u^i <= sum p_d^i + p_omax and -sum u^i <= -sum p_d^i + p_omax.
ConstraintSystem build_vpp_constraints(const Instance& instance);

/// Largest positive violation across every row, in kW. Zero means feasible.
double check_feasibility(const ConstraintSystem& cs, const Instance& instance,
                         const Decision& u);

/// sum_i (u^i - p_c^i)^2, kW^2.
double objective(const Instance& instance, const Decision& u);

/// True when sum p_c < sum p_d - p_omax, the only way the VPP rows can be
/// empty of feasible points.
bool instance_infeasible(const Instance& instance);

/// Rewrites the system over the free coordinates of the equality rows'
/// null space, with the minimum-norm particular solution. Throws on
/// rank-deficient equality templates.
std::pair<ConstraintSystem, Reparameterization> eliminate_equalities(
    const ConstraintSystem& cs);

/// Per-agent input features, one row per agent: (p_c, p_d).
Tensor instance_features(const Instance& instance);

}  // namespace loop_pe
