#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/agents.hpp"
#include "care/biomarker.hpp"
#include "care/causal_net.hpp"
#include "care/config.hpp"
#include "care/eval.hpp"
#include "care/grounding.hpp"
#include "care/knowledge.hpp"
#include "care/signal_io.hpp"

namespace care {

struct FitResult {
  DiscretizerModel discretizer;
  CausalNetwork network;
  LabeledEvidenceSet data;
  std::vector<std::string> warnings;
};

/// Discretizer, K2 structure and CPTs from factor vectors and outcome labels
/// (record id -> state; unlabeled records only shape the discretizer and the
/// factor-only families).
FitResult fit_model(const std::vector<BiomarkerVector>& vectors, const std::map<std::string, std::string>& labels,
                    const PipelineConfig& cfg);

/// Fitted artifacts as stored on disk under one directory.
struct Artifacts {
  DiscretizerModel discretizer;
  CausalNetwork network;
  std::shared_ptr<const KnowledgeIndex> index;  // may be null
};

void save_artifacts(const std::filesystem::path& dir, const DiscretizerModel& d, const CausalNetwork& n);
void save_index(const std::filesystem::path& dir, const KnowledgeIndex& index);
/// MissingArtifact names the absent file; the index is optional.
Artifacts load_artifacts(const std::filesystem::path& dir);

std::map<std::string, BiomarkerVector> encode_store(const RecordStore& store, const Encoder& encoder);
nlohmann::json to_json(const std::map<std::string, BiomarkerVector>& table);
std::map<std::string, BiomarkerVector> biomarker_table_from_json(const nlohmann::json& j);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Record store shared between request threads: reads take a shared lock,
/// uploads an exclusive one.
class SharedStore {
 public:
  explicit SharedStore(std::filesystem::path root) : store_(std::move(root)) {}

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(mu_);
    return f(static_cast<const RecordStore&>(store_));
  }
  std::string store(const EcgRecord& rec) {
    std::unique_lock lock(mu_);
    return store_.store(rec);
  }

 private:
  mutable std::shared_mutex mu_;
  RecordStore store_;
};

/// Everything a request needs, immutable once built. Swapped atomically.
struct PipelineHandle {
  PipelineConfig config;
  std::shared_ptr<SharedStore> store;
  DiscretizerModel discretizer;
  CausalNetwork network;
  std::shared_ptr<const KnowledgeIndex> index;
  std::shared_ptr<const Retriever> retriever;
  std::map<std::string, BiomarkerVector> vectors;  // precomputed table
  ScpLexicon lexicon;
  DescriptorMap descriptors;
  std::string version;

  /// Table entry if present, otherwise the waveform encoding of the stored record.
  BiomarkerVector biomarkers(const std::string& record_id) const;
  DiscreteEvidence evidence(const std::string& record_id) const;
  Generator generator() const;
  OrchestrationOptions orchestration() const;
};

/// Loads artifacts, corpus index, lexicon and descriptor map named by the config.
std::shared_ptr<const PipelineHandle> load_handle(const PipelineConfig& cfg);

/// Full History -> Diagnosis -> Response run for a stored record.
CaseResult explain_record(const PipelineHandle& h, const std::string& record_id, const std::string& query,
                          std::optional<bool> fallback_enabled = std::nullopt);

}  // namespace care
