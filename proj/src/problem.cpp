#include "loop_pe/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "loop_pe/rng.hpp"

namespace loop_pe {

void Instance::validate() const {
  if (agents.empty()) throw std::invalid_argument("instance: needs at least 1 agent");
  if (!(p_omax > 0.0)) throw std::invalid_argument("instance: p_omax must be > 0");
  std::unordered_set<std::string> seen;
  for (const auto& a : agents) {
    if (!(a.p_c > 0.0))
      throw std::invalid_argument("instance: agent " + a.agent_id + " has p_c <= 0");
    if (a.p_d < 0.0)
      throw std::invalid_argument("instance: agent " + a.agent_id + " has p_d < 0");
    if (!seen.insert(a.agent_id).second)
      throw std::invalid_argument("instance: duplicate agent_id " + a.agent_id);
  }
}

Permutation::Permutation(std::vector<std::size_t> map) : map_(std::move(map)) {
  std::vector<char> hit(map_.size(), 0);
  for (std::size_t v : map_) {
    if (v >= map_.size() || hit[v])
      throw std::invalid_argument("permutation: map is not a bijection");
    hit[v] = 1;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = i;
  return Permutation(std::move(m));
}

Permutation Permutation::random(std::size_t n, Rng& rng) {
  std::vector<std::size_t> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = i;
  rng.shuffle(m);
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(map_.size());
  for (std::size_t k = 0; k < map_.size(); ++k) inv[map_[k]] = k;
  return Permutation(std::move(inv));
}

Instance Permutation::apply(const Instance& inst) const {
  if (inst.agents.size() != map_.size())
    throw std::invalid_argument("permutation: size mismatch with instance");
  Instance out;
  out.p_omax = inst.p_omax;
  out.agents.reserve(map_.size());
  for (std::size_t k = 0; k < map_.size(); ++k) out.agents.push_back(inst.agents[map_[k]]);
  return out;
}

Decision Permutation::apply(const Decision& u, std::size_t d_u) const {
  if (u.size() != map_.size() * d_u)
    throw std::invalid_argument("permutation: size mismatch with decision");
  Decision out(u.size());
  for (std::size_t k = 0; k < map_.size(); ++k)
    for (std::size_t d = 0; d < d_u; ++d) out[k * d_u + d] = u[map_[k] * d_u + d];
  return out;
}

Tensor Permutation::apply_rows(const Tensor& t) const {
  if (t.rows() != map_.size())
    throw std::invalid_argument("permutation: size mismatch with tensor rows");
  Tensor out(t.rows(), t.cols());
  for (std::size_t k = 0; k < map_.size(); ++k)
    for (std::size_t j = 0; j < t.cols(); ++j) out.at(k, j) = t.at(map_[k], j);
  return out;
}

ConstraintSystem build_vpp_constraints(const Instance& instance) {
  ConstraintSystem cs;
  cs.d_u = 1;
  cs.local_template = Tensor(2, 1, {1.0, -1.0});
  cs.coupled_template = Tensor(2, 1, {1.0, -1.0});
  cs.local_rhs.reserve(instance.n());
  cs.coupled_rhs.reserve(instance.n());
  for (const auto& a : instance.agents) {
    cs.local_rhs.push_back({a.p_c, 0.0});
    cs.coupled_rhs.push_back({a.p_d, -a.p_d});
  }
  cs.coupled_offset = {instance.p_omax, instance.p_omax};
  return cs;
}

double check_feasibility(const ConstraintSystem& cs, const Instance& instance,
                         const Decision& u) {
  const std::size_t n = cs.n_agents();
  if (instance.n() != n || u.size() != n * cs.d_u)
    throw std::invalid_argument("check_feasibility: dimension mismatch");

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < cs.local_rows(); ++r) {
      double lhs = 0.0;
      for (std::size_t d = 0; d < cs.d_u; ++d)
        lhs += cs.local_template.at(r, d) * u[i * cs.d_u + d];
      worst = std::max(worst, lhs - cs.local_rhs[i][r]);
    }
  }
  for (std::size_t r = 0; r < cs.coupled_rows(); ++r) {
    double lhs = 0.0;
    double rhs = cs.coupled_offset[r];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < cs.d_u; ++d)
        lhs += cs.coupled_template.at(r, d) * u[i * cs.d_u + d];
      rhs += cs.coupled_rhs[i][r];
    }
    worst = std::max(worst, lhs - rhs);
  }
  return worst;
}

double objective(const Instance& instance, const Decision& u) {
  if (u.size() != instance.n())
    throw std::invalid_argument("objective: decision length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < instance.n(); ++i) {
    const double d = u[i] - instance.agents[i].p_c;
    s += d * d;
  }
  return s;
}

bool instance_infeasible(const Instance& instance) {
  double sum_c = 0.0, sum_d = 0.0;
  for (const auto& a : instance.agents) {
    sum_c += a.p_c;
    sum_d += a.p_d;
  }
  return sum_c < sum_d - instance.p_omax;
}

Decision Reparameterization::to_original(const Decision& z) const {
  if (is_identity) return z;
  const std::size_t dz = null_basis.cols();
  const std::size_t du = null_basis.rows();
  const std::size_t n = particular.size();
  if (z.size() != n * dz)
    throw std::invalid_argument("reparameterization: free-coordinate length mismatch");
  Decision u(n * du, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < du; ++d) {
      double v = particular[i][d];
      for (std::size_t k = 0; k < dz; ++k) v += null_basis.at(d, k) * z[i * dz + k];
      u[i * du + d] = v;
    }
  return u;
}

namespace {

// Modified Gram-Schmidt orthonormalization of the rows of A; throws when a
// row is (numerically) dependent on the previous ones.
std::vector<std::vector<double>> orthonormal_rows(const Tensor& a) {
  const std::size_t r = a.rows(), d = a.cols();
  std::vector<std::vector<double>> q;
  q.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::vector<double> v(d);
    double row_norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      v[j] = a.at(i, j);
      row_norm += v[j] * v[j];
    }
    row_norm = std::sqrt(row_norm);
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += u[j] * v[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 1e-12 * std::max(1.0, row_norm))
      throw std::runtime_error("eliminate_equalities: equality rows are rank deficient");
    for (auto& x : v) x /= norm;
    q.push_back(std::move(v));
  }
  return q;
}

}  // namespace

std::pair<ConstraintSystem, Reparameterization> eliminate_equalities(
    const ConstraintSystem& cs) {
  if (!cs.has_equalities()) {
    Reparameterization rep;
    rep.is_identity = true;
    rep.null_basis = Tensor::identity(cs.d_u);
    rep.particular.assign(cs.n_agents(), std::vector<double>(cs.d_u, 0.0));
    return {cs, rep};
  }

  const Tensor& A = cs.equality_template;
  const std::size_t r = A.rows(), d = A.cols();
  if (r > d)
    throw std::runtime_error("eliminate_equalities: more equality rows than variables");

  const auto q = orthonormal_rows(A);

  // Null-space basis: orthonormalize the standard basis against the row
  // space and keep the d - r survivors, in coordinate order.
  std::vector<std::vector<double>> basis;
  for (std::size_t e = 0; e < d && basis.size() < d - r; ++e) {
    std::vector<double> v(d, 0.0);
    v[e] = 1.0;
    for (const auto& u : q) {
      double dot = u[e];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
    }
    for (const auto& u : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += u[j] * v[j];
      for (std::size_t j = 0; j < d; ++j) v[j] -= dot * u[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-10) {
      for (auto& x : v) x /= norm;
      basis.push_back(std::move(v));
    }
  }
  const std::size_t dz = d - r;
  if (basis.size() != dz)
    throw std::runtime_error("eliminate_equalities: null-space extraction failed");

  Tensor null_basis(d, dz);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < dz; ++k) null_basis.at(j, k) = basis[k][j];

  // Minimum-norm particular solution of A u = -b via p = A^T (A A^T)^-1 (-b).
  // The Gram matrix is small (r x r); plain Gaussian elimination suffices.
  std::vector<std::vector<double>> gram(r, std::vector<double>(r, 0.0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += A.at(i, k) * A.at(j, k);
      gram[i][j] = s;
    }
  auto solve_gram = [&](std::vector<double> rhs) {
    auto m = gram;
    for (std::size_t col = 0; col < r; ++col) {
      std::size_t piv = col;
      for (std::size_t i = col + 1; i < r; ++i)
        if (std::fabs(m[i][col]) > std::fabs(m[piv][col])) piv = i;
      if (std::fabs(m[piv][col]) < 1e-14)
        throw std::runtime_error("eliminate_equalities: singular Gram matrix");
      std::swap(m[piv], m[col]);
      std::swap(rhs[piv], rhs[col]);
      for (std::size_t i = col + 1; i < r; ++i) {
        const double f = m[i][col] / m[col][col];
        for (std::size_t j = col; j < r; ++j) m[i][j] -= f * m[col][j];
        rhs[i] -= f * rhs[col];
      }
    }
    std::vector<double> y(r);
    for (std::size_t i = r; i-- > 0;) {
      double s = rhs[i];
      for (std::size_t j = i + 1; j < r; ++j) s -= m[i][j] * y[j];
      y[i] = s / m[i][i];
    }
    return y;
  };

  Reparameterization rep;
  rep.is_identity = false;
  rep.null_basis = null_basis;
  rep.particular.reserve(cs.n_agents());
  for (std::size_t i = 0; i < cs.n_agents(); ++i) {
    std::vector<double> neg_b(r);
    for (std::size_t k = 0; k < r; ++k) neg_b[k] = -cs.equality_rhs[i][k];
    const auto y = solve_gram(neg_b);
    std::vector<double> p(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < r; ++k) p[j] += A.at(k, j) * y[k];
    rep.particular.push_back(std::move(p));
  }

  // Rewrite inequality templates over z: H N, with per-agent shift H p^i
  // folded into the right-hand side.
  auto reduce_template = [&](const Tensor& h) {
    Tensor out(h.rows(), dz);
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t k = 0; k < dz; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += h.at(i, j) * null_basis.at(j, k);
        out.at(i, k) = s;
      }
    return out;
  };
  auto shift_rhs = [&](const Tensor& h, const std::vector<std::vector<double>>& rhs) {
    std::vector<std::vector<double>> out(rhs.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      out[i].resize(rhs[i].size());
      for (std::size_t row = 0; row < rhs[i].size(); ++row) {
        double shift = 0.0;
        for (std::size_t j = 0; j < d; ++j) shift += h.at(row, j) * rep.particular[i][j];
        out[i][row] = rhs[i][row] - shift;
      }
    }
    return out;
  };

  ConstraintSystem reduced;
  reduced.d_u = dz;
  reduced.local_template = reduce_template(cs.local_template);
  reduced.local_rhs = shift_rhs(cs.local_template, cs.local_rhs);
  reduced.coupled_template = reduce_template(cs.coupled_template);
  reduced.coupled_rhs = shift_rhs(cs.coupled_template, cs.coupled_rhs);
  reduced.coupled_offset = cs.coupled_offset;
  return {reduced, rep};
}

Tensor instance_features(const Instance& instance) {
  Tensor x(instance.n(), 2);
  for (std::size_t i = 0; i < instance.n(); ++i) {
    x.at(i, 0) = instance.agents[i].p_c;
    x.at(i, 1) = instance.agents[i].p_d;
  }
  return x;
}

}  // namespace loop_pe
