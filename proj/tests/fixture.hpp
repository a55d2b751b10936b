#pragma once

// A small fitted pipeline on disk built from synthetic records.

#include <filesystem>
#include <map>
#include <string>

#include "care/config.hpp"
#include "care/pipeline.hpp"
#include "care/synthetic.hpp"
#include "oracle.hpp"

namespace fixture {

struct Built {
  care::PipelineConfig config;
  std::vector<care::DatasetEntry> entries;
  std::filesystem::path root;
};

inline care::PipelineConfig base_config(const std::filesystem::path& root) {
  care::PipelineConfig cfg;
  cfg.paths.store = (root / "data" / "store").string();
  cfg.paths.artifacts = (root / "artifacts").string();
  cfg.paths.corpus = std::string(CARE_DATA_DIR) + "/corpus.jsonl";
  cfg.paths.lexicon = std::string(CARE_DATA_DIR) + "/scp_lexicon.json";
  cfg.paths.descriptor_map = std::string(CARE_DATA_DIR) + "/descriptors.json";
  return cfg;
}

inline Built build(const std::string& tag, std::size_t n, std::uint64_t seed = 42) {
  Built b;
  b.root = oracle::temp_dir(tag);
  b.config = base_config(b.root);
  b.entries = care::generate_dataset(care::default_synthetic_spec(), n, seed, b.root / "data");
  care::RecordStore store(b.config.paths.store);
  const auto table = care::encode_store(store, care::WaveformEncoder(b.config.schema));
  std::vector<care::BiomarkerVector> vectors;
  for (const auto& [id, v] : table) vectors.push_back(v);
  std::map<std::string, std::string> labels;
  for (const auto& e : b.entries) labels[e.record_id] = e.outcome;
  const auto fit = care::fit_model(vectors, labels, b.config);
  care::save_artifacts(b.config.paths.artifacts, fit.discretizer, fit.network);
  care::write_json_file(std::filesystem::path(b.config.paths.artifacts) / "biomarkers.json", care::to_json(table));
  return b;
}

}  // namespace fixture
