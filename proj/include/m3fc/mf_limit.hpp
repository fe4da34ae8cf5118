#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "m3fc/measures.hpp"
#include "m3fc/rng.hpp"

namespace m3fc {

// Exact probabilistic model of a finite major-minor system: transition rows
// and reward written directly against the mean field, with no per-agent
// simulation involved. This is what the limiting deterministic mean-field
// dynamics and the dynamic-programming machinery operate on.
//
// Conventions: minor states x in [0, n_states), minor actions u in
// [0, n_actions), major states x0 in [0, n_major_states), major actions u0
// in [0, n_major_actions). All rows are probability vectors.
class FiniteModel {
 public:
  virtual ~FiniteModel() = default;

  virtual std::string id() const { return ""; }
  virtual int n_states() const = 0;
  virtual int n_actions() const = 0;
  virtual int n_major_states() const = 0;
  virtual int n_major_actions() const = 0;

  // Distribution of the next minor state given (x, u, x0, u0, mu),
  // written into row[0..n_states).
  virtual void minor_row(int x, int u, int x0, int u0, const FiniteMF& mu,
                         double* row) const = 0;

  // Distribution of the next major state given (x0, u0, mu), written into
  // row[0..n_major_states).
  virtual void major_row(int x0, int u0, const FiniteMF& mu,
                         double* row) const = 0;

  virtual double reward(int x0, int u0, const FiniteMF& mu) const = 0;

  // Canonical start condition used by the dynamic-programming cross-checks.
  virtual int init_major() const = 0;
  virtual FiniteMF init_mf() const = 0;
};

// Known ids: "beach" (5x5 torus, major = (bar, target) pair) and "toy3"
// (3-cell cycle with pinned target). Throws ConfigError on unknown ids.
std::unique_ptr<FiniteModel> make_finite_model(const std::string& id);

// One exact mean-field transition under a shared decision rule:
//   mu'(y) = sum_x sum_u mu(x) rule(x,u) p(y | x, u, x0, u0, mu).
// `rule` is n_states x n_actions with rows summing to 1 (RowNotNormalized
// otherwise). The output is a probability vector by construction.
FiniteMF mf_step(const FiniteModel& model, int x0, int u0, const FiniteMF& mu,
                 const Eigen::MatrixXd& rule);

// Sampling counterpart of mf_step for measuring finite-N fluctuations.
// `mu_emp` must be an empirical measure of `n_agents` agents (weights in
// multiples of 1/n_agents); the agents are reconstructed from its atoms,
// each samples one action from `rule` and one transition from the kernel,
// and the result is l1_distance(empirical next mean field, mf_step result).
double lln_gap(const FiniteModel& model, int x0, int u0,
               const FiniteMF& mu_emp, const Eigen::MatrixXd& rule,
               int n_agents, Rng rng);

// All mean fields with weights in multiples of 1/resolution, enumerated in
// lexicographic order of their integer weight compositions. Node count is
// C(resolution + dim - 1, dim - 1); construction throws MeshTooLarge beyond
// `max_nodes`.
class SimplexGrid {
 public:
  SimplexGrid(int dim, int resolution, long max_nodes = 4'000'000);

  int dim() const { return dim_; }
  int resolution() const { return res_; }
  int size() const { return n_nodes_; }

  FiniteMF node(int i) const;
  // Integer weights of node i (sum to resolution).
  const int* counts(int i) const { return counts_.data() + size_t(i) * dim_; }

  // Index of the grid node closest to mu in Euclidean distance; exact ties
  // between equally close nodes are broken deterministically.
  int nearest(const FiniteMF& mu) const;

  // Index of the node with exactly these integer weights.
  int rank(const int* k) const;

 private:
  int dim_ = 0, res_ = 0, n_nodes_ = 0;
  std::vector<int> counts_;
  std::vector<double> binom_;  // C(n, r) table, (res_ + dim_ + 1) square
  double choose(int n, int r) const;
};

// Optimal values per (major state, simplex node), plus the per-sweep
// sup-norm residuals recorded by value_iteration.
struct ValueTable {
  int n_major = 0;
  int n_nodes = 0;
  std::vector<double> v;
  std::vector<double> residuals;

  double at(int x0, int node) const { return v[size_t(x0) * n_nodes + node]; }
  double& at(int x0, int node) { return v[size_t(x0) * n_nodes + node]; }
};

// Mesh of joint actions used by value_iteration and greedy_policy: all
// deterministic decision rules (n_actions^n_states of them, rule index
// varying slowest) paired with every major action:
//   action = rule_index * n_major_actions + u0.
// Rule index r decodes to per-state actions digit-wise, state 0 fastest:
//   u(x) = (r / n_actions^x) % n_actions.
struct ActionMesh {
  int n_rules = 0;
  int n_major_actions = 0;
  int size() const { return n_rules * n_major_actions; }
  static ActionMesh build(const FiniteModel& model, long max_mesh);
  int state_action(int rule_index, int x, int n_actions) const;
};

// Value iteration for the limiting control problem on a simplex grid.
// Off-grid next mean fields are projected to the nearest node. Sweeps stop
// once the sup-norm change drops to `tol`; `max_work` caps the precomputed
// transition table (nodes x majors x mesh entries, MeshTooLarge beyond it).
ValueTable value_iteration(const FiniteModel& model, const SimplexGrid& grid,
                           double gamma, double tol,
                           long max_work = 50'000'000);

// Deterministic stationary policy extracted from a converged table: per
// (major state, node) the mesh action maximizing the one-step lookahead,
// ties broken by lowest action index.
struct GreedyPolicy {
  int n_states = 0;
  int n_major = 0;
  int n_nodes = 0;
  std::vector<int> mesh_action;   // (x0, node) -> mesh action index
  std::vector<int> major_action;  // (x0, node) -> u0
  std::vector<int> rule_action;   // ((x0 * n_nodes + node) * n_states + x) -> u

  int u0(int x0, int node) const {
    return major_action[size_t(x0) * n_nodes + node];
  }
  int u(int x0, int node, int x) const {
    return rule_action[(size_t(x0) * n_nodes + node) * n_states + x];
  }
};

GreedyPolicy greedy_policy(const ValueTable& table, const FiniteModel& model,
                           const SimplexGrid& grid, double gamma,
                           long max_work = 50'000'000);

// One episode of the N-agent finite system driven by a greedy table policy:
// agent counts per minor state, exact shared decision rule, rewards taken at
// the empirical mean field. Returns the discounted return over `horizon`
// steps. Deterministic kernel rows move counts wholesale; stochastic rows
// sample per agent.
double simulate_greedy_return(const FiniteModel& model, const SimplexGrid& grid,
                              const GreedyPolicy& policy, int n_agents,
                              int horizon, double gamma, Rng rng);

// CSV export with columns: major_state, w0..w{dim-1}, value.
void write_value_table_csv(const std::string& path, const ValueTable& table,
                           const SimplexGrid& grid);

}  // namespace m3fc
