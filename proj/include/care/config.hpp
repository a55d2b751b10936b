#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/agents.hpp"
#include "care/causal_net.hpp"

namespace care {

struct RetrievalConfig {
  std::string backend = "tfidf";  // or "remote-embedding"
  std::string embedding_endpoint;
  int k = 5;
  int top_m = 3;
  double match_threshold = kDefaultMatchThreshold;
};

struct VerifierConfig {
  double hr_threshold = 0.5;
  bool fallback_enabled = true;
};

struct PathsConfig {
  std::string store = "store";
  std::string artifacts = "artifacts";
  std::string corpus;
  std::string lexicon;
  std::string descriptor_map;
};

struct PipelineConfig {
  std::vector<std::string> schema = default_factor_schema();
  std::string outcome = "outcome";
  std::vector<std::string> outcome_states{"Normal", "Abnormal"};
  int num_bins = 3;
  double pseudocount = 1.0;
  int max_parents = 3;
  EdgeConstraints constraints;  // empty ordering: schema order, then the outcome
  RetrievalConfig retrieval;
  VerifierConfig verifier;
  GeneratorConfig generator;
  int counterfactual_max_edits = 1;
  int crc_top_n = 3;
  double scp_threshold = 0.85;
  PathsConfig paths;
  std::uint64_t seed = 42;
  std::string cors_origin = "*";

  /// Throws InvalidArgument when a value is outside its declared range.
  void validate() const;
  /// Node ordering handed to structure learning.
  std::vector<std::string> effective_ordering() const;
  /// Relative paths resolved against `base`.
  void resolve_paths(const std::filesystem::path& base);
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
/// Reads and validates a config; relative paths resolve against its directory.
PipelineConfig read_pipeline_config(const std::filesystem::path& path);

/// Stable digest of the serialized config.
std::string config_fingerprint(const PipelineConfig& c);

}  // namespace care
