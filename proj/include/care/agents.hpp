#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/biomarker.hpp"
#include "care/causal_net.hpp"
#include "care/counterfactual.hpp"
#include "care/grounding.hpp"
#include "care/knowledge.hpp"
#include "care/signal_io.hpp"

namespace care {

inline constexpr const char* kFallbackNote = "(Note: Fallback used due to high hallucination risk.)";
inline constexpr const char* kPromptInstruction =
    "Explain the prediction clearly and medically grounded, and attach citations using fact tags (e.g., [Fact 1]).";

/// Contributions at or below this are treated as no effect.
inline constexpr double kDriverMinScore = 1e-9;

// --- history ------------------------------------------------------------------

struct HistoryResult {
  BiomarkerDelta delta;
  bool surrogate = false;
};

/// Delta against the patient's most recent earlier record, or failing that
/// against the nearest other record by z-scored Euclidean distance.
std::optional<HistoryResult> history_agent(const RecordStore& store,
                                           const std::map<std::string, BiomarkerVector>& vectors,
                                           const std::string& current_id);

// --- diagnosis -----------------------------------------------------------------

/// Outcome state -> phrases a query may use to name it.
using OutcomeLexicon = std::map<std::string, std::vector<std::string>>;

/// Counterfactual target named by the query, honoring "not X"/"no X"; falls
/// back to the runner-up state.
std::string resolve_target(const Posterior& posterior, const std::string& query, const OutcomeLexicon& lexicon);

struct DiagnosisResult {
  Posterior posterior;
  FactorContribution drivers;  // contributions above kDriverMinScore, ranked
  std::string target;
  std::optional<CounterfactualResult> counterfactual;
  nlohmann::json counterfactual_view;  // null when no probe ran
};

DiagnosisResult diagnosis_agent(const CausalNetwork& net, const DiscreteEvidence& evidence, const std::string& outcome,
                                const std::string& query, const OutcomeLexicon& lexicon,
                                bool run_counterfactual = true, int max_edits = 1);

// --- response ------------------------------------------------------------------

struct AgentMessage {
  std::string query;
  std::optional<HistoryResult> history;
  DiscreteEvidence evidence;
  Posterior prediction;
  RetrievalResult retrieved;
  FactorContribution drivers;
  nlohmann::json counterfactual;  // CounterfactualResult JSON view or null
  int top_m = 3;

  /// "factor=label" for the first top_m drivers present in the evidence.
  std::vector<std::string> driver_descriptors() const;
};

enum class GeneratorMode { offline, remote };

struct GeneratorConfig {
  GeneratorMode mode = GeneratorMode::offline;
  std::string endpoint;
  std::string model = "gpt-4";
  double temperature = 0.3;
  int max_tokens = 600;
  std::string api_key_env = "CAREX_API_KEY";
  std::chrono::milliseconds timeout{30000};

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

std::string build_prompt(const AgentMessage& m, bool rag_only);

/// Deterministic offline explanation: each fact quoted with its tag, each
/// driver named with its bin label, the counterfactual probe (unless
/// rag_only), then the prediction with its probability.
std::string offline_explanation(const AgentMessage& m, bool rag_only);

/// One OpenAI-compatible chat completion; returns the first choice's content.
std::string remote_completion(const std::string& prompt, const GeneratorConfig& cfg);

/// Text generator: (message, rag_only, prompt) -> explanation.
using Generator = std::function<std::string(const AgentMessage&, bool, const std::string&)>;

Generator make_generator(const GeneratorConfig& cfg);

struct RespondOptions {
  bool fallback_enabled = true;
  double hr_threshold = 0.5;
  double match_threshold = kDefaultMatchThreshold;
  /// When false the gate is off and empty retrieval is not flagged.
  bool verifier_enabled = true;
};

struct ExplanationPayload {
  std::string explanation;
  double hallucination_score = 0.0;
  bool used_fallback = false;
  std::string raw_with_causal;
  std::optional<std::string> raw_rag_only;
  std::vector<std::string> warnings;
  double initial_hallucination_score = 0.0;
  bool ungroundable = false;
  std::string prompt;
  std::optional<std::string> rag_only_prompt;
  MatchReport match;
};

ExplanationPayload respond(const AgentMessage& m, const Generator& generate, const RespondOptions& opts = {});

// --- orchestration ---------------------------------------------------------------

/// Stages switched on for one run; all on is the full pipeline.
struct StageFlags {
  bool graph = true;
  bool rag = true;
  bool verifier = true;
  bool counterfactual = true;
};

struct OrchestrationOptions {
  int k = 5;
  int top_m = 3;
  int max_edits = 1;
  RespondOptions respond;
};

struct CaseResult {
  AgentMessage message;
  ExplanationPayload payload;
  DiagnosisResult diagnosis;  // drivers and posterior even when the graph stage is off
};

/// History -> Diagnosis -> Response for one evidence vector. With the graph
/// stage off the prediction is the outcome prior and no drivers are passed
/// on; with rag off no facts are retrieved.
CaseResult orchestrate(const CausalNetwork& net, const std::string& outcome, const DiscreteEvidence& evidence,
                       const std::string& query, const std::optional<HistoryResult>& history,
                       const OutcomeLexicon& lexicon, const Retriever* retriever, const Generator& generate,
                       const StageFlags& flags, const OrchestrationOptions& opts);

/// {explanation, hallucination_score, used_fallback, raw_with_causal, raw_rag_only, warnings}
nlohmann::json to_json(const ExplanationPayload& p);
/// Payload plus the audit view: prompts, drivers, facts, match details.
nlohmann::json audit_json(const AgentMessage& m, const ExplanationPayload& p);
nlohmann::json to_json(const AgentMessage& m);

}  // namespace care
