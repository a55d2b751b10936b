#include "care/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "care/error.hpp"
#include "care/text.hpp"
#include "csv.hpp"

namespace care {

using json = nlohmann::json;

// --- SCP keyword mapping -----------------------------------------------------

ScpLexicon scp_lexicon_from_json(const json& j) {
  ScpLexicon lex;
  try {
    for (const auto& [code, entry] : j.at("codes").items()) {
      ScpEntry e;
      e.label = entry.value("label", code);
      e.keywords = entry.at("keywords").get<std::vector<std::string>>();
      for (const auto& k : e.keywords) {
        if (text::tokenize(k).empty()) throw Error(ErrorCode::InvalidArgument, "empty keyword for SCP code " + code);
      }
      lex.codes[code] = e;
    }
    if (j.contains("outcome_states")) lex.outcome_terms = j.at("outcome_states").get<OutcomeLexicon>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed SCP lexicon: ") + e.what());
  }
  return lex;
}

ScpLexicon read_scp_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return scp_lexicon_from_json(json::parse(ss.str()));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, "lexicon " + path.string() + " is not JSON: " + e.what());
  }
}

std::set<std::string> map_text_to_scp(const std::string& content, const ScpLexicon& lexicon, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "SCP threshold must be in (0,1]");
  const auto sentences = explanation_sentences(content);
  const auto tokens = text::tokenize(content);
  std::set<std::string> out;
  for (const auto& [code, entry] : lexicon.codes) {
    for (const auto& kw : entry.keywords) {
      // Verbatim occurrence, at token boundaries so "mi" does not hit "family".
      const auto kt = text::tokenize(kw);
      bool hit = std::search(tokens.begin(), tokens.end(), kt.begin(), kt.end()) != tokens.end();
      for (std::size_t i = 0; !hit && i < sentences.size(); ++i) hit = fuzzy_match(kw, sentences[i]) >= tau;
      if (hit) {
        out.insert(code);
        break;
      }
    }
  }
  return out;
}

// --- classification metrics ----------------------------------------------------

ClassificationMetrics classification_metrics(const std::vector<std::set<std::string>>& pred,
                                             const std::vector<std::set<std::string>>& gold,
                                             const std::set<std::string>& labels) {
  if (pred.size() != gold.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(pred.size()) + " predictions vs " + std::to_string(gold.size()) + " gold sets");
  }
  if (pred.empty()) throw Error(ErrorCode::InvalidArgument, "no examples to score");
  ClassificationMetrics m;
  std::set<std::string> universe = labels;
  for (const auto& s : pred) universe.insert(s.begin(), s.end());
  for (const auto& s : gold) universe.insert(s.begin(), s.end());
  for (const auto& l : universe) m.per_label[l];

  std::size_t exact = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) ++exact;
    for (const auto& l : universe) {
      const bool p = pred[i].count(l) > 0, g = gold[i].count(l) > 0;
      auto& s = m.per_label[l];
      if (p && g) ++s.tp;
      if (p && !g) ++s.fp;
      if (!p && g) ++s.fn;
    }
  }
  m.accuracy = static_cast<double>(exact) / static_cast<double>(pred.size());
  if (universe.empty()) {
    m.precision = m.recall = m.f1 = 1.0;
    return m;
  }
  for (auto& [label, s] : m.per_label) {
    if (s.tp + s.fp == 0 && s.tp + s.fn == 0) {
      s.vacuous = true;
      s.precision = s.recall = s.f1 = 1.0;
      m.vacuous_labels.push_back(label);
    } else {
      s.precision = s.tp + s.fp ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
      s.recall = s.tp + s.fn ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
      s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    }
    m.precision += s.precision;
    m.recall += s.recall;
    m.f1 += s.f1;
  }
  const auto n = static_cast<double>(m.per_label.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

// --- ablation ------------------------------------------------------------------

std::vector<AblationConfig> standard_ablations() {
  return {{"A0", false, false, false, false},
          {"A1", true, false, false, false},
          {"A2", true, true, false, false},
          {"A3", true, true, true, false},
          {"A4", true, true, true, true}};
}

AblationConfig ablation_by_name(const std::string& name) {
  for (const auto& a : standard_ablations()) {
    if (a.name == name) return a;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown ablation variant " + name + " (expected A0..A4)");
}

std::vector<EvalExample> parse_eval_manifest(std::string_view content,
                                             const std::function<BiomarkerVector(const std::string&)>& lookup) {
  std::vector<EvalExample> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "manifest line " + std::to_string(line_no);
    try {
      const auto j = json::parse(line);
      EvalExample e;
      e.record_id = j.value("record_id", std::string{});
      e.example_id = j.value("example_id", e.record_id.empty() ? "ex" + std::to_string(out.size()) : e.record_id);
      e.query = j.value("query", std::string{});
      if (j.contains("features")) {
        auto f = j.at("features");
        if (!f.contains("record_id")) f["record_id"] = e.record_id;
        e.features = biomarkers_from_json(f);
      } else if (!e.record_id.empty()) {
        e.features = lookup(e.record_id);
      } else {
        throw Error(ErrorCode::InvalidArgument, where + ": needs record_id or features");
      }
      if (j.contains("gold_labels")) e.gold_labels = j.at("gold_labels").get<std::set<std::string>>();
      if (j.contains("gold_answer")) e.gold_answer = j.at("gold_answer").get<std::string>();
      if (!e.gold_labels && !e.gold_answer) throw Error(ErrorCode::InvalidArgument, where + ": needs gold_labels or gold_answer");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::InvalidArgument, where + ": " + ex.what());
    }
  }
  return out;
}

const std::map<std::string, std::string>& metric_formulas() {
  static const std::map<std::string, std::string> f = {
      {"accuracy", "exact-set-match"},
      {"precision_recall_f1", "macro over labels; labels with no predicted and no gold positives score 1"},
      {"answer_normalization", "lowercase, strip punctuation, drop leading a/an/the"},
      {"fuzzy_match", "token-set Dice on lowercase alphanumeric tokens"},
      {"hr", "1 - matched facts / retrieved facts; fact matched if best sentence Dice >= tau"},
      {"groundedness", "explanation sentences with best fact Dice >= tau / sentences"},
      {"context_relevance", "tf-idf cosine(query, explanation)"},
      {"srs", "tf-idf cosine(explanation, concatenated facts)"},
      {"crc", "top-n reference drivers named (Dice >= tau against any sentence) / min(n, drivers)"},
  };
  return f;
}

EvalAggregates aggregate(const std::vector<EvalRow>& rows, const std::set<std::string>& labels,
                         std::map<std::string, LabelScores>* per_label) {
  EvalAggregates a;
  a.n = rows.size();
  if (rows.empty()) return a;
  std::vector<std::set<std::string>> pred, gold;
  for (const auto& r : rows) {
    pred.push_back(r.predicted_labels);
    gold.push_back(r.gold_labels);
    a.crc += r.crc;
    a.groundedness += r.groundedness;
    a.context_relevance += r.context_relevance;
    a.hr += r.hr;
    a.srs += r.srs;
  }
  const auto n = static_cast<double>(rows.size());
  a.crc /= n;
  a.groundedness /= n;
  a.context_relevance /= n;
  a.hr /= n;
  a.srs /= n;
  const auto m = classification_metrics(pred, gold, labels);
  a.accuracy = m.accuracy;
  a.precision = m.precision;
  a.recall = m.recall;
  a.f1 = m.f1;
  a.vacuous_labels = m.vacuous_labels;
  if (per_label) *per_label = m.per_label;
  return a;
}

std::vector<EvalReport> run_ablation(const std::vector<EvalExample>& examples, const EvalContext& ctx,
                                     const std::vector<AblationConfig>& variants) {
  if (!ctx.network) throw Error(ErrorCode::MissingArtifact, "causal network (fit stage)");
  if (!ctx.discretizer) throw Error(ErrorCode::MissingArtifact, "discretizer (fit stage)");
  if (!ctx.index) throw Error(ErrorCode::MissingArtifact, "knowledge index (index stage)");
  std::shared_ptr<const KnowledgeIndex> borrowed(ctx.index, [](const KnowledgeIndex*) {});
  TfidfRetriever tfidf(borrowed);
  const Retriever* retriever = ctx.retriever ? ctx.retriever : &tfidf;
  const Generator generate = ctx.generate ? ctx.generate : make_generator(ctx.generator);

  std::set<std::string> labels;
  for (const auto& e : examples) {
    if (e.gold_answer) {
      for (const auto& s : ctx.network->node(ctx.outcome).states) labels.insert(text::normalize_answer(s));
    }
    if (e.gold_labels) {
      for (const auto& [code, entry] : ctx.lexicon.codes) labels.insert(code);
    }
  }

  OrchestrationOptions opts;
  opts.k = ctx.k;
  opts.top_m = ctx.top_m;
  opts.max_edits = ctx.max_edits;
  opts.respond.hr_threshold = ctx.hr_threshold;
  opts.respond.match_threshold = ctx.match_threshold;
  opts.respond.fallback_enabled = true;

  std::vector<EvalReport> reports;
  for (const auto& v : variants) {
    EvalReport rep;
    rep.variant = v;
    rep.backbone = ctx.generate ? "custom" : ctx.generator.mode == GeneratorMode::offline ? "offline-template" : ctx.generator.model;
    rep.config_fingerprint = ctx.config_fingerprint;
    const StageFlags flags{v.graph_enabled, v.rag_enabled, v.verifier_enabled, v.counterfactual_enabled};
    for (const auto& ex : examples) {
      auto evidence = discretize(*ctx.discretizer, ex.features);
      evidence.record_id = ex.record_id;
      const auto c = orchestrate(*ctx.network, ctx.outcome, evidence, ex.query, std::nullopt,
                                 ctx.lexicon.outcome_terms, v.rag_enabled ? retriever : nullptr, generate, flags, opts);
      EvalRow row;
      row.example_id = ex.example_id;
      row.record_id = ex.record_id;
      row.query = ex.query;
      row.predicted_state = c.message.prediction.argmax_state();
      row.predicted_probability = c.message.prediction.probs[c.message.prediction.argmax()];
      row.explanation = c.payload.explanation;
      row.used_fallback = c.payload.used_fallback;
      if (ex.gold_answer) {
        row.gold_labels = {text::normalize_answer(*ex.gold_answer)};
        row.predicted_labels = {text::normalize_answer(row.predicted_state)};
      } else {
        row.gold_labels = *ex.gold_labels;
        row.predicted_labels = map_text_to_scp(row.explanation, ctx.lexicon, ctx.scp_threshold);
      }
      row.correct = row.predicted_labels == row.gold_labels;
      const auto facts = c.message.retrieved.facts();
      row.num_facts = static_cast<int>(facts.size());
      if (c.diagnosis.counterfactual && flags.graph) {
        row.counterfactual_target = c.diagnosis.counterfactual->target;
        row.counterfactual_achieved = c.diagnosis.counterfactual->achieved;
      }
      row.crc = crc(row.explanation, c.diagnosis.drivers, ctx.descriptors, ctx.crc_top_n, ctx.match_threshold);
      row.groundedness = groundedness(row.explanation, facts, ctx.match_threshold);
      row.context_relevance = context_relevance(ex.query, row.explanation, *ctx.index);
      row.hr = c.payload.hallucination_score;
      row.srs = srs(row.explanation, facts, *ctx.index);
      rep.rows.push_back(std::move(row));
    }
    rep.aggregates = aggregate(rep.rows, labels, &rep.per_label);
    reports.push_back(std::move(rep));
  }
  return reports;
}

// --- report emission -----------------------------------------------------------

namespace {

json flags_json(const AblationConfig& v) {
  return json{{"name", v.name},
              {"graph_enabled", v.graph_enabled},
              {"rag_enabled", v.rag_enabled},
              {"verifier_enabled", v.verifier_enabled},
              {"counterfactual_enabled", v.counterfactual_enabled}};
}

std::string join(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ";") + x;
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << content;
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& x : r.rows) {
    rows.push_back(json{{"example_id", x.example_id},
                        {"record_id", x.record_id},
                        {"query", x.query},
                        {"predicted_state", x.predicted_state},
                        {"predicted_probability", x.predicted_probability},
                        {"predicted_labels", x.predicted_labels},
                        {"gold_labels", x.gold_labels},
                        {"correct", x.correct},
                        {"explanation", x.explanation},
                        {"used_fallback", x.used_fallback},
                        {"num_facts", x.num_facts},
                        {"counterfactual_target", x.counterfactual_target ? json(*x.counterfactual_target) : json(nullptr)},
                        {"counterfactual_achieved", x.counterfactual_achieved ? json(*x.counterfactual_achieved) : json(nullptr)},
                        {"crc", x.crc},
                        {"groundedness", x.groundedness},
                        {"context_relevance", x.context_relevance},
                        {"hr", x.hr},
                        {"srs", x.srs}});
  }
  json per_label = json::object();
  for (const auto& [l, s] : r.per_label) {
    per_label[l] = json{{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"precision", s.precision},
                        {"recall", s.recall}, {"f1", s.f1}, {"vacuous", s.vacuous}};
  }
  const auto& a = r.aggregates;
  return json{{"variant", flags_json(r.variant)},
              {"backbone", r.backbone},
              {"config_fingerprint", r.config_fingerprint},
              {"metric_formulas", metric_formulas()},
              {"aggregates",
               {{"n", a.n},
                {"accuracy", a.accuracy},
                {"precision", a.precision},
                {"recall", a.recall},
                {"f1", a.f1},
                {"crc", a.crc},
                {"groundedness", a.groundedness},
                {"context_relevance", a.context_relevance},
                {"hr", a.hr},
                {"srs", a.srs},
                {"vacuous_labels", a.vacuous_labels}}},
              {"per_label", per_label},
              {"rows", rows}};
}

std::string report_csv(const EvalReport& r) {
  std::string out =
      "example_id,record_id,predicted_state,predicted_probability,predicted_labels,gold_labels,correct,"
      "used_fallback,num_facts,counterfactual_target,counterfactual_achieved,crc,groundedness,"
      "context_relevance,hr,srs\n";
  for (const auto& x : r.rows) {
    std::vector<std::string> cells{x.example_id,
                                   x.record_id,
                                   x.predicted_state,
                                   text::format_double(x.predicted_probability),
                                   join(x.predicted_labels),
                                   join(x.gold_labels),
                                   x.correct ? "1" : "0",
                                   x.used_fallback ? "1" : "0",
                                   std::to_string(x.num_facts),
                                   x.counterfactual_target.value_or(""),
                                   x.counterfactual_achieved ? (*x.counterfactual_achieved ? "1" : "0") : "",
                                   text::format_double(x.crc),
                                   text::format_double(x.groundedness),
                                   text::format_double(x.context_relevance),
                                   text::format_double(x.hr),
                                   text::format_double(x.srs)};
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv::escape(cells[i]);
    out += "\n";
  }
  return out;
}

std::string plot_data_csv(const std::vector<EvalReport>& reports) {
  std::string out = "variant,backbone,metric,value\n";
  for (const auto& r : reports) {
    const auto& a = r.aggregates;
    const std::vector<std::pair<std::string, double>> metrics{
        {"accuracy", a.accuracy}, {"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1},
        {"crc", a.crc}, {"groundedness", a.groundedness}, {"context_relevance", a.context_relevance},
        {"hr", a.hr}, {"srs", a.srs}};
    for (const auto& [name, value] : metrics) {
      out += csv::escape(r.variant.name) + "," + csv::escape(r.backbone) + "," + name + "," +
             text::format_double(value) + "\n";
    }
  }
  return out;
}

std::string ablation_grid_csv(const std::vector<EvalReport>& reports) {
  std::string out = "variant,latent,graph,rag,verifier,counterfactual,Acc,F1,CRC,Ground.,HR,SRS\n";
  for (const auto& r : reports) {
    const auto& v = r.variant;
    const auto& a = r.aggregates;
    out += csv::escape(v.name) + ",1," + (v.graph_enabled ? "1" : "0") + "," + (v.rag_enabled ? "1" : "0") + "," +
           (v.verifier_enabled ? "1" : "0") + "," + (v.counterfactual_enabled ? "1" : "0") + "," +
           text::format_double(a.accuracy) + "," + text::format_double(a.f1) + "," + text::format_double(a.crc) + "," +
           text::format_double(a.groundedness) + "," + text::format_double(a.hr) + "," + text::format_double(a.srs) +
           "\n";
  }
  return out;
}

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / (r.variant.name + ".json"), to_json(r).dump(2) + "\n");
  write_file(dir / (r.variant.name + ".csv"), report_csv(r));
}

void emit_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& r : reports) emit_report(r, dir);
  write_file(dir / "plot_data.csv", plot_data_csv(reports));
  write_file(dir / "ablation_grid.csv", ablation_grid_csv(reports));
}

}  // namespace care
