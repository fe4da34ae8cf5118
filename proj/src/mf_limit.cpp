#include "m3fc/mf_limit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>

#include "envs/beach_core.hpp"
#include "envs/toy3_core.hpp"
#include "m3fc/errors.hpp"

namespace m3fc {

namespace {

namespace bc = beachcore;
namespace tc = toy3core;

// Major state packs (bar, target) as bar * 25 + target; both the bar move
// and the minor move are deterministic, the target walks on its own.
class BeachModel final : public FiniteModel {
 public:
  std::string id() const override { return "beach"; }
  int n_states() const override { return bc::kStates; }
  int n_actions() const override { return bc::kActions; }
  int n_major_states() const override { return bc::kStates * bc::kStates; }
  int n_major_actions() const override { return bc::kActions; }

  void minor_row(int x, int u, int, int, const FiniteMF&,
                 double* row) const override {
    std::fill(row, row + bc::kStates, 0.0);
    row[bc::step_cell(x, u)] = 1.0;
  }

  void major_row(int x0, int u0, const FiniteMF&, double* row) const override {
    int bar = bc::step_cell(x0 / bc::kStates, u0);
    double tgt[bc::kStates];
    bc::target_row(x0 % bc::kStates, tgt);
    std::fill(row, row + n_major_states(), 0.0);
    for (int t = 0; t < bc::kStates; ++t)
      row[bar * bc::kStates + t] = tgt[t];
  }

  double reward(int x0, int, const FiniteMF& mu) const override {
    return bc::reward(x0 / bc::kStates, x0 % bc::kStates, mu);
  }

  int init_major() const override { return 0; }
  FiniteMF init_mf() const override {
    FiniteMF mu(bc::kStates);
    for (int c = 0; c < bc::kStates; ++c) mu[c] = 1.0 / bc::kStates;
    return mu;
  }
};

class Toy3Model final : public FiniteModel {
 public:
  std::string id() const override { return "toy3"; }
  int n_states() const override { return tc::kStates; }
  int n_actions() const override { return tc::kActions; }
  int n_major_states() const override { return tc::kStates; }
  int n_major_actions() const override { return tc::kActions; }

  void minor_row(int x, int u, int, int, const FiniteMF&,
                 double* row) const override {
    std::fill(row, row + tc::kStates, 0.0);
    row[tc::shift(x, u)] = 1.0;
  }

  void major_row(int x0, int u0, const FiniteMF&, double* row) const override {
    std::fill(row, row + tc::kStates, 0.0);
    row[tc::shift(x0, u0)] = 1.0;
  }

  double reward(int x0, int, const FiniteMF& mu) const override {
    return tc::reward(x0, mu);
  }

  int init_major() const override { return tc::kInitBar; }
  FiniteMF init_mf() const override {
    FiniteMF mu(tc::kStates);
    for (int c = 0; c < tc::kStates; ++c) mu[c] = tc::kInitMf[c];
    return mu;
  }
};

void check_rule(const FiniteModel& model, const Eigen::MatrixXd& rule) {
  if (rule.rows() != model.n_states() || rule.cols() != model.n_actions())
    throw SizeMismatch("decision rule shape does not match the model");
  for (int x = 0; x < rule.rows(); ++x) {
    double s = 0.0;
    for (int u = 0; u < rule.cols(); ++u) {
      if (!(rule(x, u) >= 0.0))
        throw RowNotNormalized("decision rule has a negative entry");
      s += rule(x, u);
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw RowNotNormalized("decision rule row does not sum to 1");
  }
}

// Minor-state counts of the n_agents-agent swarm whose empirical measure is
// mu (weights assumed multiples of 1/n_agents up to rounding noise).
std::vector<long> atom_counts(const FiniteMF& mu, int n_agents) {
  int n = mu.size();
  std::vector<long> c(n);
  std::vector<double> frac(n);
  long total = 0;
  for (int x = 0; x < n; ++x) {
    double v = mu[x] * n_agents;
    c[x] = std::lround(v);
    frac[x] = v - double(c[x]);
    total += c[x];
  }
  // Repair rounding drift by nudging the entries that are furthest from
  // their rounded value in the helpful direction.
  while (total != n_agents) {
    int step = total < n_agents ? 1 : -1;
    int best = -1;
    for (int x = 0; x < n; ++x) {
      if (step < 0 && c[x] == 0) continue;
      if (best < 0 || step * frac[x] > step * frac[best]) best = x;
    }
    c[best] += step;
    frac[best] -= step;
    total += step;
  }
  return c;
}

}  // namespace

std::unique_ptr<FiniteModel> make_finite_model(const std::string& id) {
  if (id == "beach") return std::make_unique<BeachModel>();
  if (id == "toy3") return std::make_unique<Toy3Model>();
  throw ConfigError("unknown finite model id: " + id);
}

FiniteMF mf_step(const FiniteModel& model, int x0, int u0, const FiniteMF& mu,
                 const Eigen::MatrixXd& rule) {
  if (mu.size() != model.n_states())
    throw SizeMismatch("mean field size does not match the model");
  check_rule(model, rule);
  int nx = model.n_states(), nu = model.n_actions();
  FiniteMF out(nx);
  std::vector<double> row(nx);
  for (int x = 0; x < nx; ++x) {
    if (mu[x] == 0.0) continue;
    for (int u = 0; u < nu; ++u) {
      double w = mu[x] * rule(x, u);
      if (w == 0.0) continue;
      model.minor_row(x, u, x0, u0, mu, row.data());
      for (int y = 0; y < nx; ++y) out[y] += w * row[y];
    }
  }
  return out;
}

double lln_gap(const FiniteModel& model, int x0, int u0,
               const FiniteMF& mu_emp, const Eigen::MatrixXd& rule,
               int n_agents, Rng rng) {
  if (n_agents < 1) throw InvalidArgument("lln_gap needs at least one agent");
  FiniteMF limit = mf_step(model, x0, u0, mu_emp, rule);

  int nx = model.n_states(), nu = model.n_actions();
  std::vector<long> counts = atom_counts(mu_emp, n_agents);
  std::vector<double> urow(nu), xrow(nx);
  std::vector<long> next(nx, 0L);
  for (int x = 0; x < nx; ++x) {
    if (counts[x] == 0) continue;
    for (int u = 0; u < nu; ++u) urow[u] = rule(x, u);
    for (long i = 0; i < counts[x]; ++i) {
      int u = rng.categorical(urow);
      model.minor_row(x, u, x0, u0, mu_emp, xrow.data());
      next[rng.categorical(xrow)] += 1;
    }
  }
  FiniteMF emp(nx);
  for (int y = 0; y < nx; ++y) emp[y] = double(next[y]) / n_agents;
  return l1_distance(emp, limit);
}

SimplexGrid::SimplexGrid(int dim, int resolution, long max_nodes)
    : dim_(dim), res_(resolution) {
  if (dim < 1 || resolution < 1)
    throw InvalidArgument("simplex grid needs dim >= 1 and resolution >= 1");
  int bn = res_ + dim_ + 1;
  binom_.assign(size_t(bn) * bn, 0.0);
  for (int n = 0; n < bn; ++n) {
    binom_[size_t(n) * bn] = 1.0;
    for (int r = 1; r <= n; ++r)
      binom_[size_t(n) * bn + r] =
          binom_[size_t(n - 1) * bn + r - 1] +
          (r <= n - 1 ? binom_[size_t(n - 1) * bn + r] : 0.0);
  }
  double total = choose(res_ + dim_ - 1, dim_ - 1);
  if (total > double(max_nodes))
    throw MeshTooLarge("simplex grid would have " + std::to_string(total) +
                       " nodes (cap " + std::to_string(max_nodes) + ")");
  n_nodes_ = int(total);

  counts_.reserve(size_t(n_nodes_) * dim_);
  std::vector<int> k(dim_, 0);
  k[dim_ - 1] = res_;
  // Lexicographic successor: find the last position before the end with
  // mass to its right, bump it by one unit, push the remaining tail mass
  // all the way right.
  while (true) {
    counts_.insert(counts_.end(), k.begin(), k.end());
    if (dim_ == 1) break;
    int j = -1, tail = 0;
    for (int p = dim_ - 2; p >= 0; --p) {
      tail = 0;
      for (int q = p + 1; q < dim_; ++q) tail += k[q];
      if (tail > 0) {
        j = p;
        break;
      }
    }
    if (j < 0) break;
    k[j] += 1;
    for (int q = j + 1; q < dim_; ++q) k[q] = 0;
    k[dim_ - 1] = tail - 1;
  }
  if (long(counts_.size()) != long(n_nodes_) * dim_)
    throw RuntimeFailure("simplex grid enumeration is inconsistent");
}

double SimplexGrid::choose(int n, int r) const {
  if (r < 0 || r > n) return 0.0;
  int bn = res_ + dim_ + 1;
  return binom_[size_t(n) * bn + r];
}

FiniteMF SimplexGrid::node(int i) const {
  FiniteMF mu(dim_);
  const int* k = counts(i);
  for (int d = 0; d < dim_; ++d) mu[d] = double(k[d]) / res_;
  return mu;
}

int SimplexGrid::rank(const int* k) const {
  // Lexicographic rank: for each position, count compositions whose prefix
  // is smaller at that position.
  long r = 0;
  int rem = res_;
  for (int d = 0; d < dim_ - 1; ++d) {
    for (int v = 0; v < k[d]; ++v)
      r += long(choose(rem - v + dim_ - d - 2, dim_ - d - 2));
    rem -= k[d];
  }
  return int(r);
}

int SimplexGrid::nearest(const FiniteMF& mu) const {
  if (mu.size() != dim_)
    throw SizeMismatch("mean field size does not match the grid");
  // Round each scaled weight, then fix the count drift one unit at a time,
  // always adjusting the entry whose squared error grows the least. Unit
  // steps on a separable convex objective make this greedy exact.
  std::vector<int> k(dim_);
  std::vector<double> v(dim_);
  long total = 0;
  for (int d = 0; d < dim_; ++d) {
    v[d] = mu[d] * res_;
    k[d] = int(std::lround(v[d]));
    if (k[d] < 0) k[d] = 0;
    total += k[d];
  }
  while (total != res_) {
    int step = total < res_ ? 1 : -1;
    int best = -1;
    double best_cost = 0.0;
    for (int d = 0; d < dim_; ++d) {
      if (step < 0 && k[d] == 0) continue;
      double r = k[d] - v[d];
      double cost = step > 0 ? 2 * r + 1 : 1 - 2 * r;
      // Lowest cost wins; on exact ties prefer the move that keeps early
      // coordinates small (increment later entries, decrement earlier ones).
      bool take = best < 0 || cost < best_cost - 1e-15;
      if (!take && std::abs(cost - best_cost) <= 1e-15 && step > 0)
        take = d > best;
      if (take) {
        best = d;
        best_cost = cost;
      }
    }
    k[best] += step;
    total += step;
  }
  return rank(k.data());
}

ActionMesh ActionMesh::build(const FiniteModel& model, long max_mesh) {
  double rules = std::pow(double(model.n_actions()), model.n_states());
  double mesh = rules * model.n_major_actions();
  if (mesh > double(max_mesh))
    throw MeshTooLarge("action mesh would have " + std::to_string(mesh) +
                       " entries (cap " + std::to_string(max_mesh) + ")");
  ActionMesh m;
  m.n_rules = int(rules);
  m.n_major_actions = model.n_major_actions();
  return m;
}

int ActionMesh::state_action(int rule_index, int x, int n_actions) const {
  int r = rule_index;
  for (int i = 0; i < x; ++i) r /= n_actions;
  return r % n_actions;
}

namespace {

// Shared precomputation for value_iteration and greedy_policy: per
// (x0, node) the reward rows, major transition rows and projected next
// nodes for every mesh action.
struct DppTables {
  ActionMesh mesh;
  int nx0 = 0, nu0 = 0, nodes = 0;
  std::vector<double> reward;     // (x0 * nodes + node) * nu0 + u0
  std::vector<double> major;      // ((x0 * nodes + node) * nu0 + u0) * nx0 + y0
  std::vector<int> next_node;     // ((node * nx0 + x0) * nu0 + u0) * n_rules + r
};

DppTables build_tables(const FiniteModel& model, const SimplexGrid& grid,
                       long max_work) {
  DppTables t;
  t.mesh = ActionMesh::build(model, max_work);
  t.nx0 = model.n_major_states();
  t.nu0 = model.n_major_actions();
  t.nodes = grid.size();
  long work = long(t.nodes) * t.nx0 * t.nu0 * t.mesh.n_rules;
  if (work > max_work)
    throw MeshTooLarge("dynamic-programming table would have " +
                       std::to_string(work) + " entries (cap " +
                       std::to_string(max_work) + ")");

  int nx = model.n_states(), nu = model.n_actions();
  t.reward.resize(size_t(t.nx0) * t.nodes * t.nu0);
  t.major.resize(size_t(t.nx0) * t.nodes * t.nu0 * t.nx0);
  t.next_node.resize(size_t(work));

  Eigen::MatrixXd rule(nx, nu);
  for (int n = 0; n < t.nodes; ++n) {
    FiniteMF mu = grid.node(n);
    for (int x0 = 0; x0 < t.nx0; ++x0) {
      for (int u0 = 0; u0 < t.nu0; ++u0) {
        size_t su = (size_t(x0) * t.nodes + n) * t.nu0 + u0;
        t.reward[su] = model.reward(x0, u0, mu);
        model.major_row(x0, u0, mu, &t.major[su * t.nx0]);
        for (int r = 0; r < t.mesh.n_rules; ++r) {
          rule.setZero();
          for (int x = 0; x < nx; ++x)
            rule(x, t.mesh.state_action(r, x, nu)) = 1.0;
          FiniteMF next = mf_step(model, x0, u0, mu, rule);
          size_t sn = ((size_t(n) * t.nx0 + x0) * t.nu0 + u0) *
                          t.mesh.n_rules + r;
          t.next_node[sn] = grid.nearest(next);
        }
      }
    }
  }
  return t;
}

double action_value(const DppTables& t, const ValueTable& v, double gamma,
                    int x0, int node, int u0, int r) {
  size_t su = (size_t(x0) * t.nodes + node) * t.nu0 + u0;
  size_t sn = ((size_t(node) * t.nx0 + x0) * t.nu0 + u0) * t.mesh.n_rules + r;
  int m = t.next_node[sn];
  const double* row = &t.major[su * t.nx0];
  double ev = 0.0;
  for (int y0 = 0; y0 < t.nx0; ++y0)
    if (row[y0] != 0.0) ev += row[y0] * v.at(y0, m);
  return t.reward[su] + gamma * ev;
}

}  // namespace

ValueTable value_iteration(const FiniteModel& model, const SimplexGrid& grid,
                           double gamma, double tol, long max_work) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw InvalidArgument("value iteration needs gamma in [0, 1)");
  DppTables t = build_tables(model, grid, max_work);

  ValueTable cur;
  cur.n_major = t.nx0;
  cur.n_nodes = t.nodes;
  cur.v.assign(size_t(t.nx0) * t.nodes, 0.0);
  std::vector<double> next(cur.v.size());

  const int max_sweeps = 1'000'000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double residual = 0.0;
    for (int x0 = 0; x0 < t.nx0; ++x0) {
      for (int n = 0; n < t.nodes; ++n) {
        double best = -HUGE_VAL;
        for (int r = 0; r < t.mesh.n_rules; ++r)
          for (int u0 = 0; u0 < t.nu0; ++u0)
            best = std::max(best, action_value(t, cur, gamma, x0, n, u0, r));
        next[size_t(x0) * t.nodes + n] = best;
        residual = std::max(residual,
                            std::abs(best - cur.at(x0, n)));
      }
    }
    cur.v.swap(next);
    if (!cur.residuals.empty() && residual > cur.residuals.back() + 1e-12)
      throw RuntimeFailure("value-iteration residual increased between sweeps");
    cur.residuals.push_back(residual);
    if (residual <= tol) return cur;
  }
  throw RuntimeFailure("value iteration did not converge");
}

GreedyPolicy greedy_policy(const ValueTable& table, const FiniteModel& model,
                           const SimplexGrid& grid, double gamma,
                           long max_work) {
  if (table.n_major != model.n_major_states() || table.n_nodes != grid.size())
    throw SizeMismatch("value table does not match the model and grid");
  DppTables t = build_tables(model, grid, max_work);

  GreedyPolicy g;
  g.n_states = model.n_states();
  g.n_major = t.nx0;
  g.n_nodes = t.nodes;
  g.mesh_action.assign(size_t(t.nx0) * t.nodes, 0);
  g.major_action.assign(size_t(t.nx0) * t.nodes, 0);
  g.rule_action.assign(size_t(t.nx0) * t.nodes * g.n_states, 0);

  int nu = model.n_actions();
  for (int x0 = 0; x0 < t.nx0; ++x0) {
    for (int n = 0; n < t.nodes; ++n) {
      int best_a = 0;
      double best_q = -HUGE_VAL;
      for (int r = 0; r < t.mesh.n_rules; ++r) {
        for (int u0 = 0; u0 < t.nu0; ++u0) {
          int a = r * t.nu0 + u0;
          double q = action_value(t, table, gamma, x0, n, u0, r);
          if (q > best_q) best_q = q, best_a = a;
        }
      }
      size_t s = size_t(x0) * t.nodes + n;
      g.mesh_action[s] = best_a;
      g.major_action[s] = best_a % t.nu0;
      int rule = best_a / t.nu0;
      for (int x = 0; x < g.n_states; ++x)
        g.rule_action[s * g.n_states + x] = t.mesh.state_action(rule, x, nu);
    }
  }
  return g;
}

double simulate_greedy_return(const FiniteModel& model, const SimplexGrid& grid,
                              const GreedyPolicy& policy, int n_agents,
                              int horizon, double gamma, Rng rng) {
  int nx = model.n_states();
  FiniteMF init = model.init_mf();
  std::vector<double> init_w(init.w);
  std::vector<long> counts(nx, 0);
  for (int i = 0; i < n_agents; ++i) counts[rng.categorical(init_w)] += 1;
  int x0 = model.init_major();

  std::vector<double> row(std::max(nx, model.n_major_states()));
  std::vector<long> next(nx);
  double ret = 0.0, disc = 1.0;
  FiniteMF mu(nx);
  for (int t = 0; t < horizon; ++t) {
    for (int x = 0; x < nx; ++x) mu[x] = double(counts[x]) / n_agents;
    int node = grid.nearest(mu);
    int u0 = policy.u0(x0, node);
    ret += disc * model.reward(x0, u0, mu);
    disc *= gamma;

    std::fill(next.begin(), next.end(), 0L);
    for (int x = 0; x < nx; ++x) {
      if (counts[x] == 0) continue;
      int u = policy.u(x0, node, x);
      model.minor_row(x, u, x0, u0, mu, row.data());
      int hot = -1;
      for (int y = 0; y < nx; ++y)
        if (row[y] == 1.0) hot = y;
      if (hot >= 0) {
        next[hot] += counts[x];
      } else {
        std::vector<double> r(row.begin(), row.begin() + nx);
        for (long i = 0; i < counts[x]; ++i) next[rng.categorical(r)] += 1;
      }
    }
    counts.swap(next);

    model.major_row(x0, u0, mu, row.data());
    int hot = -1;
    for (int y0 = 0; y0 < model.n_major_states(); ++y0)
      if (row[y0] == 1.0) hot = y0;
    if (hot >= 0) {
      x0 = hot;
    } else {
      std::vector<double> r(row.begin(), row.begin() + model.n_major_states());
      x0 = rng.categorical(r);
    }
  }
  return ret;
}

void write_value_table_csv(const std::string& path, const ValueTable& table,
                           const SimplexGrid& grid) {
  if (table.n_nodes != grid.size())
    throw SizeMismatch("value table does not match the grid");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw RuntimeFailure("cannot open " + path + " for writing");
  std::fprintf(f, "major_state");
  for (int d = 0; d < grid.dim(); ++d) std::fprintf(f, ",w%d", d);
  std::fprintf(f, ",value\n");
  for (int x0 = 0; x0 < table.n_major; ++x0) {
    for (int n = 0; n < table.n_nodes; ++n) {
      std::fprintf(f, "%d", x0);
      FiniteMF mu = grid.node(n);
      for (int d = 0; d < grid.dim(); ++d) std::fprintf(f, ",%.17g", mu[d]);
      std::fprintf(f, ",%.17g\n", table.at(x0, n));
    }
  }
  std::fclose(f);
}

}  // namespace m3fc
