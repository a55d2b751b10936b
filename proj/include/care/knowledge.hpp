#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "care/biomarker.hpp"
#include "care/causal_net.hpp"

namespace care {

struct FactDoc {
  std::string fact_id;
  std::string text;
  std::vector<std::string> tags;
  std::string source;
};

using SparseVector = std::vector<std::pair<std::size_t, double>>;  // ascending term index

double dot(const SparseVector& a, const SparseVector& b);
double norm(const SparseVector& a);
/// Cosine similarity; 0 when either side is the zero vector.
double cosine(const SparseVector& a, const SparseVector& b);

/// tf-idf index with idf(t) = ln((1+N)/(1+df)) + 1 and unit-length doc vectors.
struct KnowledgeIndex {
  std::map<std::string, std::size_t> vocabulary;
  std::vector<double> idf;
  std::map<std::string, SparseVector> doc_vectors;
  std::map<std::string, FactDoc> docs;
  std::vector<std::string> warnings;

  /// Same tokenize/tf-idf/normalize pipeline; unseen terms are dropped.
  SparseVector vectorize(std::string_view text) const;
};

KnowledgeIndex build_index(const std::vector<FactDoc>& docs);

std::vector<FactDoc> parse_corpus_jsonl(std::string_view content);
std::vector<FactDoc> read_corpus_jsonl(const std::filesystem::path& path);

/// q followed by "factor label" for the top_m drivers present in the
/// evidence, then the predicted state. top_m == 0 leaves q untouched.
std::string enrich_query(const std::string& q, const FactorContribution& drivers,
                         const DiscreteEvidence& evidence, const std::string& prediction, int top_m);

struct RetrievalResult {
  std::vector<std::pair<FactDoc, double>> hits;
  std::string enriched_query;
  bool empty_query_vector = false;

  std::vector<FactDoc> facts() const;
};

/// Top-k documents by cosine (ties by fact_id). Documents sharing no term with
/// the query are not returned.
RetrievalResult retrieve(const KnowledgeIndex& index, const std::string& enriched_query, int k);

/// Retrieval backend selected by configuration.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RetrievalResult retrieve(const std::string& enriched_query, int k) const = 0;
};

class TfidfRetriever : public Retriever {
 public:
  explicit TfidfRetriever(std::shared_ptr<const KnowledgeIndex> index) : index_(std::move(index)) {}
  RetrievalResult retrieve(const std::string& enriched_query, int k) const override;

 private:
  std::shared_ptr<const KnowledgeIndex> index_;
};

/// Dense retrieval through a remote embedding endpoint:
/// POST {"texts":[...]} -> {"vectors":[[...], ...]}.
class RemoteEmbeddingRetriever : public Retriever {
 public:
  RemoteEmbeddingRetriever(std::string endpoint, std::vector<FactDoc> docs,
                           std::chrono::milliseconds timeout = std::chrono::seconds(30));
  RetrievalResult retrieve(const std::string& enriched_query, int k) const override;

 private:
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const;

  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  std::vector<FactDoc> docs_;
  std::vector<std::vector<double>> doc_vectors_;
};

nlohmann::json to_json(const FactDoc& d);
FactDoc fact_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KnowledgeIndex& index);
KnowledgeIndex index_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalResult& r);

}  // namespace care
