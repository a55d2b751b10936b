#include "care/counterfactual.hpp"

#include <algorithm>

#include "care/error.hpp"

namespace care {

using json = nlohmann::json;

namespace {

struct Candidate {
  std::vector<std::pair<std::string, int>> changes;  // sorted by factor, 0-based states
  Posterior post;
};

}  // namespace

CounterfactualResult find_counterfactual(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                         const std::string& query, const std::string& target,
                                         int max_edits) {
  const auto& qn = net.node(query);
  auto tit = std::find(qn.states.begin(), qn.states.end(), target);
  if (tit == qn.states.end()) throw Error(ErrorCode::UnknownState, "target '" + target + "'");
  const auto target_idx = static_cast<std::size_t>(tit - qn.states.begin());
  if (max_edits < 1 || max_edits > kMaxCounterfactualEdits) {
    throw Error(ErrorCode::InvalidArgument, "max_edits must be in [1, " +
                                                std::to_string(kMaxCounterfactualEdits) + "]");
  }

  const auto base = evidence_states(net, evidence, query);
  CounterfactualResult result;
  result.target = target;
  result.posterior_after = infer_posterior(net, base, query);
  if (result.posterior_after.argmax() == target_idx) {
    result.achieved = true;
    return result;
  }

  std::vector<std::string> factors;
  for (const auto& [name, state] : base) factors.push_back(name);  // map order is lexicographic

  std::optional<Candidate> best;
  auto consider = [&](std::vector<std::pair<std::string, int>> changes) {
    ++result.candidates_examined;
    auto ev = base;
    for (const auto& [f, s] : changes) ev[f] = s;
    Posterior post;
    try {
      post = infer_posterior(net, ev, query);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ZeroProbabilityEvidence) return;
      throw;
    }
    if (post.argmax() != target_idx) return;
    // Enumeration runs in lexicographic order, so strict > keeps the earliest tie.
    if (!best || post.probs[target_idx] > best->post.probs[target_idx]) {
      best = Candidate{std::move(changes), std::move(post)};
    }
  };

  for (int size = 1; size <= max_edits && !best; ++size) {
    if (size == 1) {
      for (const auto& f : factors) {
        const int card = net.node(f).cardinality();
        for (int s = 0; s < card; ++s) {
          if (s != base.at(f)) consider({{f, s}});
        }
      }
    } else {
      for (std::size_t a = 0; a < factors.size(); ++a) {
        for (std::size_t b = a + 1; b < factors.size(); ++b) {
          const int ca = net.node(factors[a]).cardinality();
          const int cb = net.node(factors[b]).cardinality();
          for (int sa = 0; sa < ca; ++sa) {
            if (sa == base.at(factors[a])) continue;
            for (int sb = 0; sb < cb; ++sb) {
              if (sb == base.at(factors[b])) continue;
              consider({{factors[a], sa}, {factors[b], sb}});
            }
          }
        }
      }
    }
  }

  if (best) {
    EvidenceEdit edit;
    for (const auto& [f, s] : best->changes) edit.edits[f] = s + 1;
    result.edit = std::move(edit);
    result.posterior_after = std::move(best->post);
    result.achieved = true;
  }
  return result;
}

Posterior whatif(const CausalNetwork& net, const DiscreteEvidence& evidence,
                 const std::map<std::string, int>& overrides, const std::string& query) {
  DiscreteEvidence edited = evidence;
  for (const auto& [f, bin] : overrides) {
    const auto& node = net.node(f);
    if (bin < 1 || bin > node.cardinality()) throw Error(ErrorCode::UnknownState, f + " bin " + std::to_string(bin));
    edited.bins[f] = bin;
  }
  return infer_posterior(net, edited, query);
}

json to_json(const CounterfactualResult& r, const CausalNetwork& net, const DiscreteEvidence& evidence) {
  json edits = json::array();
  if (r.edit) {
    for (const auto& [f, to] : r.edit->edits) {
      const auto& states = net.node(f).states;
      const int from = evidence.bins.at(f);
      edits.push_back(json{{"factor", f},
                           {"from_bin", from},
                           {"to_bin", to},
                           {"from_label", states.at(static_cast<std::size_t>(from - 1))},
                           {"to_label", states.at(static_cast<std::size_t>(to - 1))}});
    }
  }
  return json{{"target", r.target},
              {"edits", edits},
              {"achieved", r.achieved},
              {"posterior_after", to_json(r.posterior_after)},
              {"candidates_examined", r.candidates_examined}};
}

}  // namespace care
