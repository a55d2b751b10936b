#include "care/grounding.hpp"

#include <algorithm>
#include <set>

#include "care/error.hpp"
#include "care/text.hpp"

namespace care {

namespace {

std::set<std::string> token_set(std::string_view s) {
  auto toks = text::tokenize(s);
  return {toks.begin(), toks.end()};
}

double dice(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

std::vector<std::set<std::string>> sentence_sets(const std::vector<std::string>& sentences) {
  std::vector<std::set<std::string>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(token_set(s));
  return out;
}

}  // namespace

double fuzzy_match(std::string_view a, std::string_view b) { return dice(token_set(a), token_set(b)); }

std::vector<std::string> explanation_sentences(std::string_view explanation) {
  std::vector<std::string> out;
  // Sentences with no tokens (stray punctuation, bare tags) are dropped.
  for (auto& s : text::split_sentences(text::strip_fact_tags(explanation))) {
    if (!text::tokenize(s).empty()) out.push_back(text::trim(s));
  }
  return out;
}

MatchReport hallucination_risk(std::string_view explanation, const std::vector<FactDoc>& facts, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "match threshold must be in (0,1]");
  MatchReport r;
  if (facts.empty()) {
    r.ungroundable = true;
    return r;
  }
  const auto sentences = explanation_sentences(explanation);
  const auto sets = sentence_sets(sentences);
  for (const auto& f : facts) {
    FactMatch m;
    m.fact_id = f.fact_id;
    const auto fs = token_set(f.text);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const double s = dice(fs, sets[i]);
      if (i == 0 || s > m.best_similarity) {
        m.best_similarity = s;
        m.best_sentence = sentences[i];
      }
    }
    m.matched = !sets.empty() && m.best_similarity >= tau;
    if (m.matched) ++r.matched_count;
    r.facts.push_back(std::move(m));
  }
  r.hr = 1.0 - static_cast<double>(r.matched_count) / static_cast<double>(facts.size());
  return r;
}

double groundedness(std::string_view explanation, const std::vector<FactDoc>& facts, double tau) {
  const auto sentences = explanation_sentences(explanation);
  if (sentences.empty() || facts.empty()) return 0.0;
  std::vector<std::set<std::string>> fact_sets;
  for (const auto& f : facts) fact_sets.push_back(token_set(f.text));
  std::size_t grounded = 0;
  for (const auto& s : sentence_sets(sentences)) {
    double best = 0.0;
    for (const auto& fs : fact_sets) best = std::max(best, dice(s, fs));
    if (best >= tau) ++grounded;
  }
  return static_cast<double>(grounded) / static_cast<double>(sentences.size());
}

double context_relevance(std::string_view query, std::string_view explanation, const KnowledgeIndex& index) {
  return cosine(index.vectorize(query), index.vectorize(text::strip_fact_tags(explanation)));
}

double srs(std::string_view explanation, const std::vector<FactDoc>& facts, const KnowledgeIndex& index) {
  std::string joined;
  for (const auto& f : facts) {
    if (!joined.empty()) joined += ' ';
    joined += f.text;
  }
  return cosine(index.vectorize(text::strip_fact_tags(explanation)), index.vectorize(joined));
}

double crc(std::string_view explanation, const FactorContribution& drivers, const DescriptorMap& descriptors,
           int top_n, double tau) {
  if (top_n < 1) throw Error(ErrorCode::InvalidArgument, "top_n must be >= 1");
  const std::size_t n = std::min(drivers.ranked.size(), static_cast<std::size_t>(top_n));
  if (n == 0) return 1.0;
  const auto sets = sentence_sets(explanation_sentences(explanation));
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& factor = drivers.ranked[i].first;
    std::vector<std::string> names{factor};
    if (auto it = descriptors.find(factor); it != descriptors.end()) {
      names.insert(names.end(), it->second.begin(), it->second.end());
    }
    bool hit = false;
    for (const auto& name : names) {
      const auto ns = token_set(name);
      for (const auto& s : sets) {
        if (dice(ns, s) >= tau) {
          hit = true;
          break;
        }
      }
      if (hit) break;
    }
    if (hit) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(n);
}

DescriptorMap descriptor_map_from_json(const nlohmann::json& j) {
  try {
    return j.get<DescriptorMap>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("descriptor map must map names to string lists: ") + e.what());
  }
}

nlohmann::json to_json(const MatchReport& r) {
  nlohmann::json facts = nlohmann::json::array();
  for (const auto& f : r.facts) {
    facts.push_back({{"fact_id", f.fact_id},
                     {"matched", f.matched},
                     {"best_sentence", f.best_sentence},
                     {"best_similarity", f.best_similarity}});
  }
  return {{"hr", r.hr}, {"matched_count", r.matched_count}, {"ungroundable", r.ungroundable}, {"facts", facts}};
}

}  // namespace care
