#include "care/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>

#include "care/error.hpp"
#include "care/http.hpp"
#include "care/text.hpp"

namespace care {

using json = nlohmann::json;

// --- history ------------------------------------------------------------------

namespace {

std::optional<HistoryResult> prior_record_delta(const RecordStore& store,
                                                const std::map<std::string, BiomarkerVector>& vectors,
                                                const std::string& current_id, const BiomarkerVector& current) {
  const auto& info = store.info(current_id);
  if (!info.patient_id || !info.acquired_at) return std::nullopt;
  const auto history = store.list_patient_history(*info.patient_id);
  auto pos = std::find(history.begin(), history.end(), current_id);
  for (auto it = std::make_reverse_iterator(pos); it != history.rend(); ++it) {
    if (*store.info(*it).acquired_at >= *info.acquired_at) continue;
    auto v = vectors.find(*it);
    if (v == vectors.end()) continue;
    return HistoryResult{delta(v->second, current), false};
  }
  return std::nullopt;
}

std::optional<HistoryResult> surrogate_delta(const std::map<std::string, BiomarkerVector>& vectors,
                                             const std::string& current_id, const BiomarkerVector& current) {
  std::map<std::string, std::pair<double, double>> stats;  // mean, sd
  for (const auto& [factor, value] : current.values) {
    std::vector<double> xs;
    for (const auto& [id, v] : vectors) {
      if (auto x = v.get(factor)) xs.push_back(*x);
    }
    if (xs.size() < 2) continue;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size()));
    if (sd > 0.0) stats[factor] = {mean, sd};
  }
  const std::string* best_id = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [id, v] : vectors) {
    if (id == current_id) continue;
    double d2 = 0.0;
    int shared = 0;
    for (const auto& [factor, ms] : stats) {
      auto a = current.get(factor);
      auto b = v.get(factor);
      if (!a || !b) continue;
      const double z = (*a - *b) / ms.second;
      d2 += z * z;
      ++shared;
    }
    if (shared == 0) continue;
    if (d2 < best) {
      best = d2;
      best_id = &id;
    }
  }
  if (!best_id) return std::nullopt;
  return HistoryResult{delta(vectors.at(*best_id), current), true};
}

}  // namespace

std::optional<HistoryResult> history_agent(const RecordStore& store,
                                           const std::map<std::string, BiomarkerVector>& vectors,
                                           const std::string& current_id) {
  auto cur = vectors.find(current_id);
  if (cur == vectors.end()) return std::nullopt;
  if (store.contains(current_id)) {
    if (auto prior = prior_record_delta(store, vectors, current_id, cur->second)) return prior;
  }
  return surrogate_delta(vectors, current_id, cur->second);
}

// --- diagnosis -----------------------------------------------------------------

namespace {

// Start offsets of `needle` inside `hay` as a contiguous token run.
std::vector<std::size_t> find_phrase(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  std::vector<std::size_t> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> best_state(const Posterior& p, const std::set<std::size_t>& allowed) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < p.states.size(); ++i) {
    if (!allowed.count(i)) continue;
    if (!best || p.probs[i] > p.probs[*best]) best = i;
  }
  return best;
}

}  // namespace

std::string resolve_target(const Posterior& posterior, const std::string& query, const OutcomeLexicon& lexicon) {
  const std::size_t top = posterior.argmax();
  const auto tokens = text::tokenize(query);
  std::set<std::size_t> named, negated;
  for (std::size_t s = 0; s < posterior.states.size(); ++s) {
    std::vector<std::string> phrases{posterior.states[s]};
    if (auto it = lexicon.find(posterior.states[s]); it != lexicon.end()) {
      phrases.insert(phrases.end(), it->second.begin(), it->second.end());
    }
    for (const auto& phrase : phrases) {
      for (std::size_t at : find_phrase(tokens, text::tokenize(phrase))) {
        const bool neg = at > 0 && (tokens[at - 1] == "not" || tokens[at - 1] == "no");
        (neg ? negated : named).insert(s);
      }
    }
  }
  std::set<std::size_t> allowed;
  for (std::size_t s : named) {
    if (s != top && !negated.count(s)) allowed.insert(s);
  }
  if (allowed.empty() && !negated.empty()) {
    for (std::size_t s = 0; s < posterior.states.size(); ++s) {
      if (s != top && !negated.count(s)) allowed.insert(s);
    }
  }
  if (allowed.empty()) {
    for (std::size_t s = 0; s < posterior.states.size(); ++s) {
      if (s != top) allowed.insert(s);
    }
  }
  auto pick = best_state(posterior, allowed);
  return posterior.states[pick.value_or(top)];
}

DiagnosisResult diagnosis_agent(const CausalNetwork& net, const DiscreteEvidence& evidence, const std::string& outcome,
                                const std::string& query, const OutcomeLexicon& lexicon, bool run_counterfactual,
                                int max_edits) {
  DiagnosisResult d;
  d.posterior = infer_posterior(net, evidence, outcome);
  for (const auto& entry : rank_contributions(net, evidence, outcome).ranked) {
    if (entry.second > kDriverMinScore) d.drivers.ranked.push_back(entry);
  }
  d.target = resolve_target(d.posterior, query, lexicon);
  if (run_counterfactual) {
    d.counterfactual = find_counterfactual(net, evidence, outcome, d.target, max_edits);
    d.counterfactual_view = to_json(*d.counterfactual, net, evidence);
  }
  return d;
}

// --- prompt and generation -----------------------------------------------------

std::vector<std::string> AgentMessage::driver_descriptors() const {
  std::vector<std::string> out;
  for (const auto& [factor, score] : drivers.ranked) {
    if (static_cast<int>(out.size()) >= top_m) break;
    auto it = evidence.labels.find(factor);
    if (it == evidence.labels.end()) continue;
    out.push_back(factor + "=" + it->second);
  }
  return out;
}

void GeneratorConfig::validate() const {
  if (mode == GeneratorMode::remote && (endpoint.empty() || model.empty())) {
    throw Error(ErrorCode::InvalidArgument, "remote generator needs an endpoint and a model");
  }
  if (max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw Error(ErrorCode::InvalidArgument, "temperature out of range");
  if (timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
}

json to_json(const GeneratorConfig& c) {
  return json{{"mode", c.mode == GeneratorMode::remote ? "remote" : "offline"},
              {"endpoint", c.endpoint},
              {"model", c.model},
              {"temperature", c.temperature},
              {"max_tokens", c.max_tokens},
              {"api_key_env", c.api_key_env},
              {"timeout_ms", c.timeout.count()}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  const auto mode = j.value("mode", std::string("offline"));
  if (mode == "remote") {
    c.mode = GeneratorMode::remote;
  } else if (mode != "offline") {
    throw Error(ErrorCode::InvalidArgument, "unknown generator mode " + mode);
  }
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
  c.validate();
  return c;
}

std::string build_prompt(const AgentMessage& m, bool rag_only) {
  std::string causal = "None";
  if (!rag_only) {
    const auto d = m.driver_descriptors();
    if (!d.empty()) {
      causal.clear();
      for (std::size_t i = 0; i < d.size(); ++i) causal += (i ? ", " : "") + d[i];
    }
  }
  std::string p = "Patient Query: " + m.query + "\n";
  p += "Key Causal Factors (from VAE/Graph): " + causal + "\n";
  p += "Retrieved Medical Facts (RAG):\n";
  int i = 0;
  for (const auto& [fact, score] : m.retrieved.hits) {
    p += "[Fact " + std::to_string(++i) + "] " + fact.text + "\n";
  }
  p += kPromptInstruction;
  p += "\n";
  return p;
}

namespace {

std::string as_sentence(std::string s) {
  s = text::trim(s);
  if (!s.empty() && s.back() != '.' && s.back() != '!' && s.back() != '?') s += '.';
  return s;
}

}  // namespace

std::string offline_explanation(const AgentMessage& m, bool rag_only) {
  std::vector<std::string> sentences;
  int i = 0;
  for (const auto& [fact, score] : m.retrieved.hits) {
    sentences.push_back("[Fact " + std::to_string(++i) + "] " + as_sentence(fact.text));
  }
  if (!rag_only) {
    for (const auto& d : m.driver_descriptors()) {
      const auto eq = d.find('=');
      sentences.push_back(d.substr(0, eq) + " is " + d.substr(eq + 1) + ".");
    }
    if (m.counterfactual.is_object()) {
      const auto& cf = m.counterfactual;
      const auto target = cf.at("target").get<std::string>();
      if (cf.at("achieved").get<bool>() && !cf.at("edits").empty()) {
        std::string change;
        for (const auto& e : cf.at("edits")) {
          if (!change.empty()) change += " and ";
          change += e.at("factor").get<std::string>() + " from " + e.at("from_label").get<std::string>() + " to " +
                    e.at("to_label").get<std::string>();
        }
        sentences.push_back("Changing " + change + " would make " + target + " the most likely outcome.");
      } else if (!cf.at("achieved").get<bool>()) {
        sentences.push_back("No small change to the evidence makes " + target + " the most likely outcome.");
      }
    }
  }
  if (!m.prediction.states.empty()) {
    const auto top = m.prediction.argmax();
    sentences.push_back("The predicted outcome is " + m.prediction.states[top] + " with probability " +
                        text::format_fixed(m.prediction.probs[top], 2) + ".");
  }
  std::string out;
  for (const auto& s : sentences) out += (out.empty() ? "" : " ") + s;
  return out;
}

std::string remote_completion(const std::string& prompt, const GeneratorConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::string> headers;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  const json body{{"model", cfg.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", cfg.temperature},
                  {"max_tokens", cfg.max_tokens}};
  const auto reply = http::post_json(cfg.endpoint, body, headers, cfg.timeout);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::RemoteUnavailable, std::string("completion reply lacks choices[0].message.content: ") + e.what());
  }
}

Generator make_generator(const GeneratorConfig& cfg) {
  cfg.validate();
  if (cfg.mode == GeneratorMode::offline) {
    return [](const AgentMessage& m, bool rag_only, const std::string&) { return offline_explanation(m, rag_only); };
  }
  return [cfg](const AgentMessage&, bool, const std::string& prompt) { return remote_completion(prompt, cfg); };
}

// --- verification gate ---------------------------------------------------------

ExplanationPayload respond(const AgentMessage& m, const Generator& generate, const RespondOptions& opts) {
  const auto facts = m.retrieved.facts();
  ExplanationPayload p;
  p.prompt = build_prompt(m, false);
  p.raw_with_causal = generate(m, false, p.prompt);
  p.match = hallucination_risk(p.raw_with_causal, facts, opts.match_threshold);
  p.initial_hallucination_score = p.match.hr;
  p.hallucination_score = p.match.hr;
  p.explanation = p.raw_with_causal;
  p.ungroundable = opts.verifier_enabled && facts.empty();

  const bool gate = opts.verifier_enabled && opts.fallback_enabled && p.match.hr > opts.hr_threshold;
  if (!gate && !p.ungroundable) return p;

  p.rag_only_prompt = build_prompt(m, true);
  std::string rag_only;
  try {
    rag_only = generate(m, true, *p.rag_only_prompt);
  } catch (const Error& e) {
    p.warnings.push_back(std::string("fallback generation failed: ") + e.what());
    return p;
  }
  p.raw_rag_only = rag_only;
  p.match = hallucination_risk(rag_only, facts, opts.match_threshold);
  p.hallucination_score = p.match.hr;
  p.used_fallback = true;
  p.explanation = text::trim(rag_only) + " " + kFallbackNote;
  if (p.ungroundable) p.warnings.push_back("no retrieved facts; explanation cannot be grounded");
  return p;
}

// --- orchestration ---------------------------------------------------------------

CaseResult orchestrate(const CausalNetwork& net, const std::string& outcome, const DiscreteEvidence& evidence,
                       const std::string& query, const std::optional<HistoryResult>& history,
                       const OutcomeLexicon& lexicon, const Retriever* retriever, const Generator& generate,
                       const StageFlags& flags, const OrchestrationOptions& opts) {
  CaseResult r;
  r.diagnosis = diagnosis_agent(net, evidence, outcome, query, lexicon, flags.graph && flags.counterfactual,
                                opts.max_edits);
  auto& m = r.message;
  m.query = query;
  m.history = history;
  m.evidence = evidence;
  m.top_m = opts.top_m;
  if (flags.graph) {
    m.prediction = r.diagnosis.posterior;
    m.drivers = r.diagnosis.drivers;
    m.counterfactual = r.diagnosis.counterfactual_view;
  } else {
    m.prediction = infer_posterior(net, StateAssignment{}, outcome);
  }
  if (flags.rag) {
    if (!retriever) throw Error(ErrorCode::MissingArtifact, "retrieval stage enabled without a knowledge index");
    const auto enriched = enrich_query(query, m.drivers, evidence, m.prediction.argmax_state(), opts.top_m);
    m.retrieved = retriever->retrieve(enriched, opts.k);
  } else {
    m.retrieved.enriched_query = query;
  }
  auto respond_opts = opts.respond;
  if (!flags.verifier) {
    respond_opts.verifier_enabled = false;
    respond_opts.fallback_enabled = false;
  }
  r.payload = respond(m, generate, respond_opts);
  return r;
}

json to_json(const ExplanationPayload& p) {
  return json{{"explanation", p.explanation},
              {"hallucination_score", p.hallucination_score},
              {"used_fallback", p.used_fallback},
              {"raw_with_causal", p.raw_with_causal},
              {"raw_rag_only", p.raw_rag_only ? json(*p.raw_rag_only) : json(nullptr)},
              {"warnings", p.warnings}};
}

json to_json(const AgentMessage& m) {
  json history = nullptr;
  if (m.history) {
    history = to_json(m.history->delta);
    history["surrogate"] = m.history->surrogate;
  }
  return json{{"query", m.query},
              {"history", history},
              {"evidence", to_json(m.evidence)},
              {"prediction", to_json(m.prediction)},
              {"retrieved", to_json(m.retrieved)},
              {"drivers", to_json(m.drivers)},
              {"driver_descriptors", m.driver_descriptors()},
              {"counterfactual", m.counterfactual}};
}

json audit_json(const AgentMessage& m, const ExplanationPayload& p) {
  auto j = to_json(p);
  j["audit"] = json{{"message", to_json(m)},
                    {"prompt", p.prompt},
                    {"rag_only_prompt", p.rag_only_prompt ? json(*p.rag_only_prompt) : json(nullptr)},
                    {"initial_hallucination_score", p.initial_hallucination_score},
                    {"ungroundable", p.ungroundable},
                    {"match", to_json(p.match)}};
  return j;
}

}  // namespace care
