#include "care/causal_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "care/error.hpp"

namespace care {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CausalNetwork

std::optional<std::size_t> CausalNetwork::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return i;
  }
  return std::nullopt;
}

const NodeSpec& CausalNetwork::node(const std::string& name) const {
  auto i = index_of(name);
  if (!i) throw Error(ErrorCode::UnknownNode, name);
  return nodes[*i];
}

std::vector<std::string> CausalNetwork::parents_of(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    if (edges.count({n.name, name})) out.push_back(n.name);
  }
  return out;
}

std::vector<std::string> CausalNetwork::topological_order() const {
  std::map<std::string, int> indeg;
  for (const auto& n : nodes) indeg[n.name] = 0;
  for (const auto& [p, c] : edges) {
    if (!indeg.count(p) || !indeg.count(c)) throw Error(ErrorCode::UnknownNode, "edge " + p + "->" + c);
    ++indeg[c];
  }
  std::vector<std::string> order;
  std::vector<bool> done(nodes.size(), false);
  while (order.size() < nodes.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (done[i] || indeg[nodes[i].name] != 0) continue;
      done[i] = true;
      order.push_back(nodes[i].name);
      for (const auto& [p, c] : edges) {
        if (p == nodes[i].name) --indeg[c];
      }
      progressed = true;
      break;
    }
    if (!progressed) throw Error(ErrorCode::ConstraintConflict, "network contains a cycle");
  }
  return order;
}

void CausalNetwork::validate() const {
  std::set<std::string> names;
  for (const auto& n : nodes) {
    if (n.states.empty()) throw Error(ErrorCode::InvalidArgument, "node " + n.name + " has no states");
    if (!names.insert(n.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate node " + n.name);
  }
  (void)topological_order();
  if (!priors.ordering.empty()) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < priors.ordering.size(); ++i) pos[priors.ordering[i]] = i;
    for (const auto& [p, c] : edges) {
      if (pos.count(p) && pos.count(c) && pos[p] >= pos[c]) {
        throw Error(ErrorCode::ConstraintConflict, "edge " + p + "->" + c + " violates ordering");
      }
    }
  }
  for (const auto& e : priors.required) {
    if (!edges.count(e)) throw Error(ErrorCode::ConstraintConflict, "required edge missing " + e.first + "->" + e.second);
  }
  for (const auto& e : priors.forbidden) {
    if (edges.count(e)) throw Error(ErrorCode::ConstraintConflict, "forbidden edge present " + e.first + "->" + e.second);
  }
  for (const auto& n : nodes) {
    auto it = cpts.find(n.name);
    if (it == cpts.end()) continue;  // structure-only network
    const auto& cpt = it->second;
    if (cpt.parents != parents_of(n.name)) {
      throw Error(ErrorCode::SchemaMismatch, "CPT parents of " + n.name + " disagree with edges");
    }
    std::size_t configs = 1;
    for (const auto& p : cpt.parents) configs *= static_cast<std::size_t>(node(p).cardinality());
    if (cpt.rows.size() != configs) throw Error(ErrorCode::SchemaMismatch, "CPT of " + n.name + " has wrong row count");
    for (const auto& row : cpt.rows) {
      if (row.size() != n.states.size()) throw Error(ErrorCode::SchemaMismatch, "CPT row width for " + n.name);
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative probability in CPT of " + n.name);
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "CPT row of " + n.name + " does not sum to 1");
    }
  }
}

double Posterior::prob(const std::string& state) const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == state) return probs[i];
  }
  throw Error(ErrorCode::UnknownState, state);
}

std::size_t Posterior::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// data

std::optional<std::size_t> LabeledEvidenceSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::vector<int>> LabeledEvidenceSet::encode() const {
  std::vector<std::vector<int>> out;
  out.reserve(rows.size());
  for (const auto& [ev, label] : rows) {
    std::vector<int> row(schema.size(), -1);
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& node = schema[i];
      if (node.name == outcome) {
        if (!label) continue;
        auto it = std::find(node.states.begin(), node.states.end(), *label);
        if (it == node.states.end()) throw Error(ErrorCode::UnknownState, "outcome '" + *label + "'");
        row[i] = static_cast<int>(it - node.states.begin());
        continue;
      }
      auto b = ev.bins.find(node.name);
      if (b == ev.bins.end()) continue;
      if (b->second < 1 || b->second > node.cardinality()) {
        throw Error(ErrorCode::UnknownState, node.name + " bin " + std::to_string(b->second));
      }
      row[i] = b->second - 1;
    }
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

struct Counts {
  // config -> per-state counts
  std::map<std::size_t, std::vector<double>> by_config;
};

Counts count_family(const std::vector<std::vector<int>>& rows, const LabeledEvidenceSet& data,
                    std::size_t child, const std::vector<std::size_t>& parents) {
  Counts c;
  const auto r = static_cast<std::size_t>(data.schema[child].cardinality());
  for (const auto& row : rows) {
    if (row[child] < 0) continue;
    std::size_t config = 0;
    bool complete = true;
    for (auto p : parents) {
      if (row[p] < 0) {
        complete = false;
        break;
      }
      config = config * static_cast<std::size_t>(data.schema[p].cardinality()) + static_cast<std::size_t>(row[p]);
    }
    if (!complete) continue;
    auto& v = c.by_config[config];
    if (v.empty()) v.assign(r, 0.0);
    v[static_cast<std::size_t>(row[child])] += 1.0;
  }
  return c;
}

std::size_t require_index(const LabeledEvidenceSet& data, const std::string& name) {
  auto i = data.index_of(name);
  if (!i) throw Error(ErrorCode::UnknownNode, name);
  return *i;
}

double k2_from_rows(const std::vector<std::vector<int>>& rows, const LabeledEvidenceSet& data,
                    std::size_t child, std::vector<std::size_t> parents) {
  std::sort(parents.begin(), parents.end());
  const double r = data.schema[child].cardinality();
  auto counts = count_family(rows, data, child, parents);
  double score = 0.0;
  for (const auto& [config, nk] : counts.by_config) {
    const double nj = std::accumulate(nk.begin(), nk.end(), 0.0);
    score += std::lgamma(r) - std::lgamma(nj + r);
    for (double n : nk) score += std::lgamma(n + 1.0);
  }
  return score;
}

}  // namespace

double k2_score(const LabeledEvidenceSet& data, const std::string& node,
                const std::vector<std::string>& parents) {
  if (data.rows.empty()) throw Error(ErrorCode::InsufficientData, "no rows");
  const auto child = require_index(data, node);
  std::vector<std::size_t> pidx;
  for (const auto& p : parents) pidx.push_back(require_index(data, p));
  return k2_from_rows(data.encode(), data, child, pidx);
}

CausalNetwork learn_structure(const LabeledEvidenceSet& data, const EdgeConstraints& priors,
                              int max_parents) {
  if (max_parents < 0) throw Error(ErrorCode::InvalidArgument, "max_parents must be >= 0");
  if (data.rows.empty()) throw Error(ErrorCode::InsufficientData, "no rows");
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < priors.ordering.size(); ++i) {
    require_index(data, priors.ordering[i]);
    if (!pos.emplace(priors.ordering[i], i).second) {
      throw Error(ErrorCode::OrderingIncomplete, "node repeated in ordering: " + priors.ordering[i]);
    }
  }
  for (const auto& n : data.schema) {
    if (!pos.count(n.name)) throw Error(ErrorCode::OrderingIncomplete, "ordering omits " + n.name);
  }
  std::set<Edge> forbidden(priors.forbidden.begin(), priors.forbidden.end());
  for (const auto& e : priors.required) {
    require_index(data, e.first);
    require_index(data, e.second);
    if (pos[e.first] >= pos[e.second]) {
      throw Error(ErrorCode::ConstraintConflict, "required edge " + e.first + "->" + e.second + " violates ordering");
    }
    if (forbidden.count(e)) {
      throw Error(ErrorCode::ConstraintConflict, "edge " + e.first + "->" + e.second + " both required and forbidden");
    }
  }

  const auto rows = data.encode();
  CausalNetwork net;
  net.nodes = data.schema;
  net.priors = priors;
  for (const auto& e : priors.required) net.edges.insert(e);

  for (std::size_t oi = 0; oi < priors.ordering.size(); ++oi) {
    const auto& child = priors.ordering[oi];
    const auto ci = require_index(data, child);
    std::vector<std::size_t> parents;
    std::set<std::string> parent_names;
    for (const auto& e : priors.required) {
      if (e.second == child) {
        parents.push_back(require_index(data, e.first));
        parent_names.insert(e.first);
      }
    }
    double current = k2_from_rows(rows, data, ci, parents);
    std::vector<std::string> candidates(priors.ordering.begin(), priors.ordering.begin() + static_cast<std::ptrdiff_t>(oi));
    std::sort(candidates.begin(), candidates.end());
    while (static_cast<int>(parents.size()) < max_parents) {
      std::optional<std::string> best;
      double best_score = current;
      for (const auto& cand : candidates) {
        if (parent_names.count(cand) || forbidden.count({cand, child})) continue;
        auto trial = parents;
        trial.push_back(require_index(data, cand));
        const double s = k2_from_rows(rows, data, ci, trial);
        if (s > best_score) {
          best_score = s;
          best = cand;
        }
      }
      if (!best) break;
      parents.push_back(require_index(data, *best));
      parent_names.insert(*best);
      net.edges.insert({*best, child});
      current = best_score;
    }
  }
  return net;
}

CausalNetwork fit_cpts(CausalNetwork net, const LabeledEvidenceSet& data, double pseudocount) {
  if (!(pseudocount > 0.0)) throw Error(ErrorCode::InvalidArgument, "pseudocount must be > 0");
  for (const auto& n : net.nodes) {
    auto i = data.index_of(n.name);
    if (!i) throw Error(ErrorCode::SchemaMismatch, "data lacks node " + n.name);
    if (data.schema[*i].states != n.states) throw Error(ErrorCode::SchemaMismatch, "state mismatch for " + n.name);
  }
  (void)net.topological_order();
  const auto rows = data.encode();
  net.cpts.clear();
  for (const auto& n : net.nodes) {
    Cpt cpt;
    cpt.parents = net.parents_of(n.name);
    std::vector<std::size_t> pidx;
    std::size_t configs = 1;
    for (const auto& p : cpt.parents) {
      pidx.push_back(*data.index_of(p));
      configs *= static_cast<std::size_t>(net.node(p).cardinality());
    }
    // pidx follows node declaration order, which matches the data schema order
    // for learned networks; count_family expects the CPT's parent order.
    auto counts = count_family(rows, data, *data.index_of(n.name), pidx);
    const double r = n.cardinality();
    cpt.rows.assign(configs, std::vector<double>(n.states.size(), 1.0 / r));
    for (const auto& [config, nk] : counts.by_config) {
      const double nj = std::accumulate(nk.begin(), nk.end(), 0.0);
      auto& row = cpt.rows[config];
      for (std::size_t k = 0; k < nk.size(); ++k) row[k] = (nk[k] + pseudocount) / (nj + pseudocount * r);
    }
    net.cpts[n.name] = std::move(cpt);
  }
  return net;
}

// ---------------------------------------------------------------------------
// variable elimination

namespace {

struct Factor {
  std::vector<std::size_t> vars;  // ascending node indices
  std::vector<std::size_t> card;
  std::vector<double> values;     // row-major, last var fastest

  std::size_t size() const { return values.size(); }
};

std::vector<std::size_t> strides_of(const Factor& f) {
  std::vector<std::size_t> s(f.vars.size(), 1);
  for (std::size_t i = f.vars.size(); i-- > 1;) s[i - 1] = s[i] * f.card[i];
  return s;
}

Factor multiply(const Factor& a, const Factor& b) {
  Factor out;
  std::set_union(a.vars.begin(), a.vars.end(), b.vars.begin(), b.vars.end(), std::back_inserter(out.vars));
  std::size_t total = 1;
  for (auto v : out.vars) {
    auto ia = std::find(a.vars.begin(), a.vars.end(), v);
    std::size_t c = ia != a.vars.end() ? a.card[static_cast<std::size_t>(ia - a.vars.begin())]
                                       : b.card[static_cast<std::size_t>(std::find(b.vars.begin(), b.vars.end(), v) - b.vars.begin())];
    out.card.push_back(c);
    total *= c;
  }
  const auto sa = strides_of(a), sb = strides_of(b);
  // Stride of each output variable inside a and b (0 when absent).
  std::vector<std::size_t> ma(out.vars.size(), 0), mb(out.vars.size(), 0);
  for (std::size_t i = 0; i < out.vars.size(); ++i) {
    auto ia = std::find(a.vars.begin(), a.vars.end(), out.vars[i]);
    if (ia != a.vars.end()) ma[i] = sa[static_cast<std::size_t>(ia - a.vars.begin())];
    auto ib = std::find(b.vars.begin(), b.vars.end(), out.vars[i]);
    if (ib != b.vars.end()) mb[i] = sb[static_cast<std::size_t>(ib - b.vars.begin())];
  }
  out.values.resize(total);
  std::vector<std::size_t> idx(out.vars.size(), 0);
  std::size_t pa = 0, pb = 0;
  for (std::size_t n = 0; n < total; ++n) {
    out.values[n] = a.values[pa] * b.values[pb];
    for (std::size_t i = out.vars.size(); i-- > 0;) {
      ++idx[i];
      pa += ma[i];
      pb += mb[i];
      if (idx[i] < out.card[i]) break;
      pa -= ma[i] * idx[i];
      pb -= mb[i] * idx[i];
      idx[i] = 0;
    }
  }
  return out;
}

Factor sum_out(const Factor& f, std::size_t var) {
  auto it = std::find(f.vars.begin(), f.vars.end(), var);
  const auto pos = static_cast<std::size_t>(it - f.vars.begin());
  Factor out;
  for (std::size_t i = 0; i < f.vars.size(); ++i) {
    if (i == pos) continue;
    out.vars.push_back(f.vars[i]);
    out.card.push_back(f.card[i]);
  }
  const auto s = strides_of(f);
  const std::size_t outer = pos == 0 ? 1 : f.size() / (s[pos - 1]);
  const std::size_t inner = s[pos];
  const std::size_t k = f.card[pos];
  out.values.assign(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < inner; ++i) {
        out.values[o * inner + i] += f.values[o * k * inner + j * inner + i];
      }
    }
  }
  return out;
}

Factor restrict_var(const Factor& f, std::size_t var, std::size_t state) {
  auto it = std::find(f.vars.begin(), f.vars.end(), var);
  if (it == f.vars.end()) return f;
  const auto pos = static_cast<std::size_t>(it - f.vars.begin());
  Factor out;
  for (std::size_t i = 0; i < f.vars.size(); ++i) {
    if (i == pos) continue;
    out.vars.push_back(f.vars[i]);
    out.card.push_back(f.card[i]);
  }
  const auto s = strides_of(f);
  const std::size_t outer = pos == 0 ? 1 : f.size() / (s[pos - 1]);
  const std::size_t inner = s[pos];
  const std::size_t k = f.card[pos];
  out.values.resize(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) out.values[o * inner + i] = f.values[o * k * inner + state * inner + i];
  }
  return out;
}

Factor cpt_factor(const CausalNetwork& net, const NodeSpec& n) {
  auto it = net.cpts.find(n.name);
  if (it == net.cpts.end()) throw Error(ErrorCode::MissingArtifact, "no CPT for node " + n.name);
  const auto& cpt = it->second;
  // Build over (parents..., node) in CPT order, then permute into ascending index order.
  std::vector<std::size_t> order;
  std::vector<std::size_t> card;
  for (const auto& p : cpt.parents) {
    order.push_back(*net.index_of(p));
    card.push_back(static_cast<std::size_t>(net.node(p).cardinality()));
  }
  order.push_back(*net.index_of(n.name));
  card.push_back(static_cast<std::size_t>(n.cardinality()));

  Factor f;
  std::vector<std::size_t> perm(order.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](auto x, auto y) { return order[x] < order[y]; });
  for (auto p : perm) {
    f.vars.push_back(order[p]);
    f.card.push_back(card[p]);
  }
  std::size_t total = 1;
  for (auto c : card) total *= c;
  f.values.resize(total);
  const auto fs = strides_of(f);
  // Position of each CPT-order variable in the sorted factor.
  std::vector<std::size_t> where(order.size());
  for (std::size_t i = 0; i < perm.size(); ++i) where[perm[i]] = i;
  std::vector<std::size_t> idx(order.size(), 0);
  for (std::size_t n_ = 0; n_ < total; ++n_) {
    std::size_t config = 0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) config = config * card[i] + idx[i];
    std::size_t dest = 0;
    for (std::size_t i = 0; i < order.size(); ++i) dest += idx[i] * fs[where[i]];
    f.values[dest] = cpt.rows.at(config).at(idx.back());
    for (std::size_t i = order.size(); i-- > 0;) {
      if (++idx[i] < card[i]) break;
      idx[i] = 0;
    }
  }
  return f;
}

struct Prepared {
  std::vector<Factor> factors;
  std::vector<std::string> order;
};

Prepared prepare(const CausalNetwork& net, const StateAssignment& evidence, const std::string& query) {
  const auto qi = net.index_of(query);
  if (!qi) throw Error(ErrorCode::UnknownNode, query);
  std::map<std::size_t, std::size_t> ev;
  for (const auto& [name, state] : evidence) {
    auto i = net.index_of(name);
    if (!i) throw Error(ErrorCode::UnknownNode, name);
    if (state < 0 || state >= net.nodes[*i].cardinality()) {
      throw Error(ErrorCode::UnknownState, name + " state " + std::to_string(state));
    }
    if (*i == *qi) continue;
    ev[*i] = static_cast<std::size_t>(state);
  }
  Prepared out;
  for (const auto& n : net.nodes) {
    auto f = cpt_factor(net, n);
    for (const auto& [v, s] : ev) f = restrict_var(f, v, s);
    out.factors.push_back(std::move(f));
  }

  // Min-degree ordering on the evidence-reduced moral graph.
  std::set<std::size_t> remaining;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    if (i != *qi && !ev.count(i)) remaining.insert(i);
  }
  std::map<std::size_t, std::set<std::size_t>> adj;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    if (!ev.count(i)) adj[i];
  }
  for (const auto& f : out.factors) {
    for (auto a : f.vars) {
      for (auto b : f.vars) {
        if (a != b) adj[a].insert(b);
      }
    }
  }
  while (!remaining.empty()) {
    std::size_t best = *remaining.begin();
    for (auto v : remaining) {
      const auto dv = adj[v].size(), db = adj[best].size();
      if (dv < db || (dv == db && net.nodes[v].name < net.nodes[best].name)) best = v;
    }
    const auto nbrs = adj[best];
    for (auto a : nbrs) {
      for (auto b : nbrs) {
        if (a != b) adj[a].insert(b);
      }
      adj[a].erase(best);
    }
    adj.erase(best);
    remaining.erase(best);
    out.order.push_back(net.nodes[best].name);
  }
  return out;
}

}  // namespace

std::vector<std::string> elimination_order(const CausalNetwork& net, const StateAssignment& evidence,
                                           const std::string& query) {
  return prepare(net, evidence, query).order;
}

Posterior infer_posterior(const CausalNetwork& net, const StateAssignment& evidence, const std::string& query) {
  auto prep = prepare(net, evidence, query);
  auto& factors = prep.factors;
  for (const auto& name : prep.order) {
    const auto v = *net.index_of(name);
    Factor prod;
    prod.values = {1.0};
    std::vector<Factor> rest;
    for (auto& f : factors) {
      if (std::binary_search(f.vars.begin(), f.vars.end(), v)) prod = multiply(prod, f);
      else rest.push_back(std::move(f));
    }
    rest.push_back(sum_out(prod, v));
    factors = std::move(rest);
  }
  Factor joint;
  joint.values = {1.0};
  for (const auto& f : factors) joint = multiply(joint, f);

  const auto& qn = net.node(query);
  Posterior post;
  post.variable = query;
  post.states = qn.states;
  post.probs.assign(qn.states.size(), 0.0);
  if (joint.vars.empty()) {
    // Query fully determined by evidence on itself: all mass on one state.
    throw Error(ErrorCode::InvalidArgument, "query factor vanished");
  }
  post.probs = joint.values;
  if (auto q = evidence.find(query); q != evidence.end()) {
    for (std::size_t i = 0; i < post.probs.size(); ++i) {
      if (static_cast<int>(i) != q->second) post.probs[i] = 0.0;
    }
  }
  const double z = std::accumulate(post.probs.begin(), post.probs.end(), 0.0);
  if (!(z > 0.0)) throw Error(ErrorCode::ZeroProbabilityEvidence, "evidence has probability 0 under the model");
  for (auto& p : post.probs) p /= z;
  return post;
}

StateAssignment evidence_states(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                const std::string& query, std::vector<std::string>* warnings) {
  StateAssignment out;
  for (const auto& [name, bin] : evidence.bins) {
    if (name == query) continue;
    auto i = net.index_of(name);
    if (!i) {
      if (warnings) warnings->push_back("evidence factor '" + name + "' is not in the network; ignored");
      continue;
    }
    if (bin < 1 || bin > net.nodes[*i].cardinality()) {
      throw Error(ErrorCode::UnknownState, name + " bin " + std::to_string(bin));
    }
    out[name] = bin - 1;
  }
  return out;
}

Posterior infer_posterior(const CausalNetwork& net, const DiscreteEvidence& evidence, const std::string& query,
                          std::vector<std::string>* warnings) {
  if (!net.has_node(query)) throw Error(ErrorCode::UnknownNode, query);
  return infer_posterior(net, evidence_states(net, evidence, query, warnings), query);
}

double total_variation(const Posterior& a, const Posterior& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) s += std::abs(a.probs[i] - b.probs.at(i));
  return 0.5 * s;
}

FactorContribution rank_contributions(const CausalNetwork& net, const DiscreteEvidence& evidence,
                                      const std::string& query) {
  if (!net.has_node(query)) throw Error(ErrorCode::UnknownNode, query);
  const auto ev = evidence_states(net, evidence, query);
  const auto full = infer_posterior(net, ev, query);
  FactorContribution out;
  for (const auto& [name, state] : ev) {
    auto reduced = ev;
    reduced.erase(name);
    out.ranked.emplace_back(name, total_variation(full, infer_posterior(net, reduced, query)));
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

// ---------------------------------------------------------------------------
// sampling

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<int> sample_states(const CausalNetwork& net, std::mt19937_64& rng) {
  std::vector<int> out(net.nodes.size(), -1);
  for (const auto& name : net.topological_order()) {
    const auto i = *net.index_of(name);
    const auto& cpt = net.cpts.at(name);
    std::size_t config = 0;
    for (const auto& p : cpt.parents) {
      const auto pi = *net.index_of(p);
      config = config * static_cast<std::size_t>(net.nodes[pi].cardinality()) + static_cast<std::size_t>(out[pi]);
    }
    const auto& row = cpt.rows[config];
    const double u = uniform01(rng);
    double acc = 0.0;
    int pick = static_cast<int>(row.size()) - 1;
    for (std::size_t k = 0; k < row.size(); ++k) {
      acc += row[k];
      if (u < acc) {
        pick = static_cast<int>(k);
        break;
      }
    }
    out[i] = pick;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json edges_to_json(const std::vector<Edge>& edges) {
  json a = json::array();
  for (const auto& [p, c] : edges) a.push_back(json::array({p, c}));
  return a;
}

std::vector<Edge> edges_from_json(const json& a) {
  std::vector<Edge> out;
  for (const auto& e : a) out.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  return out;
}

}  // namespace

json to_json(const EdgeConstraints& c) {
  return json{{"required", edges_to_json(c.required)},
              {"forbidden", edges_to_json(c.forbidden)},
              {"ordering", c.ordering}};
}

EdgeConstraints constraints_from_json(const json& j) {
  EdgeConstraints c;
  if (j.contains("required")) c.required = edges_from_json(j.at("required"));
  if (j.contains("forbidden")) c.forbidden = edges_from_json(j.at("forbidden"));
  if (j.contains("ordering")) c.ordering = j.at("ordering").get<std::vector<std::string>>();
  return c;
}

json to_json(const CausalNetwork& net) {
  json nodes = json::array();
  for (const auto& n : net.nodes) nodes.push_back(json{{"name", n.name}, {"states", n.states}});
  json edges = json::array();
  for (const auto& [p, c] : net.edges) edges.push_back(json::array({p, c}));
  json cpts = json::object();
  for (const auto& [name, cpt] : net.cpts) cpts[name] = json{{"parents", cpt.parents}, {"table", cpt.rows}};
  return json{{"nodes", nodes}, {"edges", edges}, {"cpts", cpts}, {"priors", to_json(net.priors)}};
}

CausalNetwork network_from_json(const json& j) {
  CausalNetwork net;
  try {
    for (const auto& n : j.at("nodes")) {
      net.nodes.push_back(NodeSpec{n.at("name").get<std::string>(), n.at("states").get<std::vector<std::string>>()});
    }
    for (const auto& e : j.at("edges")) net.edges.emplace(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    if (j.contains("cpts")) {
      for (const auto& [name, c] : j.at("cpts").items()) {
        net.cpts[name] = Cpt{c.at("parents").get<std::vector<std::string>>(),
                             c.at("table").get<std::vector<std::vector<double>>>()};
      }
    }
    if (j.contains("priors")) net.priors = constraints_from_json(j.at("priors"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed network JSON: ") + e.what());
  }
  net.validate();
  return net;
}

json to_json(const Posterior& p) {
  json probs = json::object();
  for (std::size_t i = 0; i < p.states.size(); ++i) probs[p.states[i]] = p.probs[i];
  return json{{"variable", p.variable}, {"states", p.states}, {"probs", probs}, {"argmax", p.argmax_state()}};
}

json to_json(const FactorContribution& c) {
  json a = json::array();
  for (const auto& [f, s] : c.ranked) a.push_back(json{{"factor", f}, {"score", s}});
  return a;
}

}  // namespace care
