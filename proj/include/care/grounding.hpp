#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/causal_net.hpp"
#include "care/knowledge.hpp"

namespace care {

inline constexpr double kDefaultMatchThreshold = 0.6;

/// Token-set Dice coefficient on lowercase alphanumeric tokens.
double fuzzy_match(std::string_view a, std::string_view b);

struct FactMatch {
  std::string fact_id;
  bool matched = false;
  std::string best_sentence;
  double best_similarity = 0.0;
};

struct MatchReport {
  std::vector<FactMatch> facts;
  std::size_t matched_count = 0;
  double hr = 0.0;
  bool ungroundable = false;  // no facts were supplied
};

/// Explanation sentences with fact tags removed.
std::vector<std::string> explanation_sentences(std::string_view explanation);

MatchReport hallucination_risk(std::string_view explanation, const std::vector<FactDoc>& facts,
                               double tau = kDefaultMatchThreshold);

double groundedness(std::string_view explanation, const std::vector<FactDoc>& facts,
                    double tau = kDefaultMatchThreshold);

double context_relevance(std::string_view query, std::string_view explanation, const KnowledgeIndex& index);

double srs(std::string_view explanation, const std::vector<FactDoc>& facts, const KnowledgeIndex& index);

using DescriptorMap = std::map<std::string, std::vector<std::string>>;

/// Fraction of the top_n drivers mentioned in the explanation (any synonym or
/// the factor name itself). An empty driver list scores 1.
double crc(std::string_view explanation, const FactorContribution& drivers, const DescriptorMap& descriptors,
           int top_n = 3, double tau = kDefaultMatchThreshold);

DescriptorMap descriptor_map_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MatchReport& r);

}  // namespace care
