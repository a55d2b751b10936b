#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/agents.hpp"
#include "care/biomarker.hpp"
#include "care/causal_net.hpp"
#include "care/grounding.hpp"
#include "care/knowledge.hpp"

namespace care {

// --- SCP keyword mapping -----------------------------------------------------

struct ScpEntry {
  std::string label;
  std::vector<std::string> keywords;
};

/// SCP codes with keywords, plus the phrases that name outcome states in a query.
struct ScpLexicon {
  std::map<std::string, ScpEntry> codes;
  OutcomeLexicon outcome_terms;
};

ScpLexicon scp_lexicon_from_json(const nlohmann::json& j);
ScpLexicon read_scp_lexicon(const std::filesystem::path& path);

/// Codes whose keyword fuzzy-matches a sentence at >= tau or occurs verbatim
/// (case-insensitive) in the text.
std::set<std::string> map_text_to_scp(const std::string& text, const ScpLexicon& lexicon, double tau = 0.85);

// --- classification metrics ----------------------------------------------------

struct LabelScores {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool vacuous = false;  // no predicted and no gold positives: scored 1
};

struct ClassificationMetrics {
  double accuracy = 0.0;  // exact set match
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // macro
  std::map<std::string, LabelScores> per_label;
  std::vector<std::string> vacuous_labels;
};

/// Labels are the union of `labels`, every predicted and every gold label.
ClassificationMetrics classification_metrics(const std::vector<std::set<std::string>>& pred,
                                             const std::vector<std::set<std::string>>& gold,
                                             const std::set<std::string>& labels = {});

// --- ablation ------------------------------------------------------------------

struct AblationConfig {
  std::string name;
  bool graph_enabled = false;
  bool rag_enabled = false;
  bool verifier_enabled = false;
  bool counterfactual_enabled = false;
};

/// A0..A4, each adding one stage to the previous.
std::vector<AblationConfig> standard_ablations();
AblationConfig ablation_by_name(const std::string& name);

struct EvalExample {
  std::string example_id;
  std::string record_id;
  BiomarkerVector features;
  std::string query;
  std::optional<std::set<std::string>> gold_labels;  // SCP codes
  std::optional<std::string> gold_answer;            // outcome state / short answer
};

/// Manifest line: {record_id | features, query, gold_labels | gold_answer}.
/// Record ids are resolved through `lookup`; inline features win.
std::vector<EvalExample> parse_eval_manifest(
    std::string_view content, const std::function<BiomarkerVector(const std::string&)>& lookup);

struct EvalRow {
  std::string example_id;
  std::string record_id;
  std::string query;
  std::string predicted_state;
  double predicted_probability = 0.0;
  std::set<std::string> predicted_labels;
  std::set<std::string> gold_labels;
  bool correct = false;
  std::string explanation;
  bool used_fallback = false;
  int num_facts = 0;
  std::optional<std::string> counterfactual_target;
  std::optional<bool> counterfactual_achieved;
  double crc = 0.0;
  double groundedness = 0.0;
  double context_relevance = 0.0;
  double hr = 0.0;
  double srs = 0.0;
};

struct EvalAggregates {
  std::size_t n = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  double crc = 0.0, groundedness = 0.0, context_relevance = 0.0, hr = 0.0, srs = 0.0;
  std::vector<std::string> vacuous_labels;
};

struct EvalReport {
  AblationConfig variant;
  std::string backbone;
  std::string config_fingerprint;
  std::vector<EvalRow> rows;
  EvalAggregates aggregates;
  std::map<std::string, LabelScores> per_label;
};

/// Identifiers of the metric formulas, carried in every report.
const std::map<std::string, std::string>& metric_formulas();

/// Aggregates recomputed from rows (means; exact-set accuracy; macro P/R/F1).
EvalAggregates aggregate(const std::vector<EvalRow>& rows, const std::set<std::string>& labels,
                         std::map<std::string, LabelScores>* per_label = nullptr);

struct EvalContext {
  const CausalNetwork* network = nullptr;
  const DiscretizerModel* discretizer = nullptr;
  const KnowledgeIndex* index = nullptr;  // metrics vectorizer
  const Retriever* retriever = nullptr;   // defaults to tf-idf over `index`
  std::string outcome = "outcome";
  ScpLexicon lexicon;
  DescriptorMap descriptors;
  GeneratorConfig generator;
  Generator generate;  // overrides `generator` when set
  int k = 5;
  int top_m = 3;
  int crc_top_n = 3;
  int max_edits = 1;
  double match_threshold = kDefaultMatchThreshold;
  double hr_threshold = 0.5;
  double scp_threshold = 0.85;
  std::string config_fingerprint;
};

/// One report per variant; rows follow example order.
std::vector<EvalReport> run_ablation(const std::vector<EvalExample>& examples, const EvalContext& ctx,
                                     const std::vector<AblationConfig>& variants);

nlohmann::json to_json(const EvalReport& r);
/// Flat per-example rows, one CSV line each after the header.
std::string report_csv(const EvalReport& r);
/// variant,backbone,metric,value
std::string plot_data_csv(const std::vector<EvalReport>& reports);
/// variant, stage flags, Acc, F1, CRC, Ground., HR, SRS
std::string ablation_grid_csv(const std::vector<EvalReport>& reports);

/// Writes <dir>/<variant>.json and <dir>/<variant>.csv.
void emit_report(const EvalReport& r, const std::filesystem::path& dir);

/// Writes <dir>/<variant>.json and <dir>/<variant>.csv for each report plus
/// <dir>/plot_data.csv and <dir>/ablation_grid.csv.
void emit_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& dir);

}  // namespace care
