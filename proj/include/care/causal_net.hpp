#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "care/biomarker.hpp"

namespace care {

struct NodeSpec {
  std::string name;
  std::vector<std::string> states;

  int cardinality() const { return static_cast<int>(states.size()); }
};

using Edge = std::pair<std::string, std::string>;  // (parent, child)

struct EdgeConstraints {
  std::vector<Edge> required;
  std::vector<Edge> forbidden;
  std::vector<std::string> ordering;
};

/// P(node | parents). Rows are indexed by the parent configuration in mixed
/// radix, first parent most significant; parents follow node declaration order.
struct Cpt {
  std::vector<std::string> parents;
  std::vector<std::vector<double>> rows;
};

/// Discrete Bayesian network over factor bins and the outcome.
struct CausalNetwork {
  std::vector<NodeSpec> nodes;
  std::set<Edge> edges;
  std::map<std::string, Cpt> cpts;
  EdgeConstraints priors;

  std::optional<std::size_t> index_of(const std::string& name) const;
  const NodeSpec& node(const std::string& name) const;
  bool has_node(const std::string& name) const { return index_of(name).has_value(); }

  /// Parents in node declaration order.
  std::vector<std::string> parents_of(const std::string& name) const;

  /// Kahn order with ties broken by declaration order; throws on cycles.
  std::vector<std::string> topological_order() const;

  /// Checks acyclicity, constraint satisfaction and CPT shape/normalization.
  void validate() const;
};

struct Posterior {
  std::string variable;
  std::vector<std::string> states;
  std::vector<double> probs;

  double prob(const std::string& state) const;
  /// First state attaining the maximum (declaration-order tie-break).
  std::size_t argmax() const;
  const std::string& argmax_state() const { return states.at(argmax()); }
};

struct FactorContribution {
  std::vector<std::pair<std::string, double>> ranked;
};

/// Training rows: factor evidence plus the outcome label (absent = unlabeled).
struct LabeledEvidenceSet {
  std::vector<NodeSpec> schema;  // factor nodes then the outcome node
  std::string outcome;
  std::vector<std::pair<DiscreteEvidence, std::optional<std::string>>> rows;

  /// Row-major state indices (0-based), -1 where unobserved.
  std::vector<std::vector<int>> encode() const;
  std::optional<std::size_t> index_of(const std::string& name) const;
};

/// Cooper-Herskovits log marginal likelihood with listwise deletion.
double k2_score(const LabeledEvidenceSet& data, const std::string& node,
                const std::vector<std::string>& parents);

/// Greedy K2 over the constraint ordering. Output carries nodes, edges and priors.
CausalNetwork learn_structure(const LabeledEvidenceSet& data, const EdgeConstraints& priors,
                              int max_parents);

/// Dirichlet-smoothed CPTs: (N_jk + alpha) / (N_j + alpha * r).
CausalNetwork fit_cpts(CausalNetwork net, const LabeledEvidenceSet& data, double pseudocount = 1.0);

/// Evidence as node -> 0-based state index.
using StateAssignment = std::map<std::string, int>;

/// Maps 1-based bins onto network states; factors unknown to the network are
/// skipped and reported through `warnings`.
StateAssignment evidence_states(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                const std::string& query, std::vector<std::string>* warnings = nullptr);

/// Exact posterior by variable elimination (min-degree order, lexicographic ties).
Posterior infer_posterior(const CausalNetwork& net, const StateAssignment& evidence,
                          const std::string& query);
Posterior infer_posterior(const CausalNetwork& net, const DiscreteEvidence& evidence,
                          const std::string& query, std::vector<std::string>* warnings = nullptr);

/// Elimination order that infer_posterior would use.
std::vector<std::string> elimination_order(const CausalNetwork& net, const StateAssignment& evidence,
                                           const std::string& query);

/// Leave-one-out total-variation contribution of each evidence factor.
FactorContribution rank_contributions(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                      const std::string& query);

double total_variation(const Posterior& a, const Posterior& b);

/// Ancestral sample (0-based state indices) using the supplied engine.
std::vector<int> sample_states(const CausalNetwork& net, std::mt19937_64& rng);

/// Uniform double in [0,1) from 53 random bits; portable across standard libraries.
double uniform01(std::mt19937_64& rng);

nlohmann::json to_json(const CausalNetwork& net);
CausalNetwork network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Posterior& p);
nlohmann::json to_json(const FactorContribution& c);
nlohmann::json to_json(const EdgeConstraints& c);
EdgeConstraints constraints_from_json(const nlohmann::json& j);

}  // namespace care
