#pragma once

#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "care/causal_net.hpp"

namespace care {

struct EvidenceEdit {
  std::map<std::string, int> edits;  // factor -> new 1-based bin

  std::size_t size() const { return edits.size(); }
};

struct CounterfactualResult {
  std::string target;
  std::optional<EvidenceEdit> edit;
  Posterior posterior_after;
  bool achieved = false;
  int candidates_examined = 0;
};

/// Hard cap on edit size; larger searches are rejected.
inline constexpr int kMaxCounterfactualEdits = 2;

/// Smallest evidence edit that makes `target` the posterior argmax. Among
/// successful edits of minimal size the one maximizing P(target) wins, ties by
/// lexicographic (factor, bin) order. Candidates with zero-probability
/// evidence are skipped.
CounterfactualResult find_counterfactual(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                         const std::string& query, const std::string& target,
                                         int max_edits = 1);

/// Posterior under evidence with `overrides` (factor -> 1-based bin) applied.
Posterior whatif(const CausalNetwork& net, const DiscreteEvidence& evidence,
                 const std::map<std::string, int>& overrides, const std::string& query);

/// JSON view: {target, edits:[{factor, from_bin, to_bin, from_label, to_label}],
/// achieved, posterior_after, candidates_examined}.
nlohmann::json to_json(const CounterfactualResult& r, const CausalNetwork& net,
                       const DiscreteEvidence& evidence);

}  // namespace care
