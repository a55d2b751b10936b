#include "care/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "care/error.hpp"
#include "care/http.hpp"
#include "care/text.hpp"

namespace care {

using json = nlohmann::json;

double dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      s += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

double norm(const SparseVector& a) { return std::sqrt(dot(a, a)); }

double cosine(const SparseVector& a, const SparseVector& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

SparseVector KnowledgeIndex::vectorize(std::string_view content) const {
  std::map<std::size_t, double> tf;
  for (const auto& tok : text::tokenize(content)) {
    auto it = vocabulary.find(tok);
    if (it != vocabulary.end()) tf[it->second] += 1.0;
  }
  SparseVector v;
  double ss = 0.0;
  for (const auto& [term, count] : tf) {
    const double w = count * idf[term];
    v.emplace_back(term, w);
    ss += w * w;
  }
  if (ss == 0.0) return {};
  const double n = std::sqrt(ss);
  for (auto& [term, w] : v) w /= n;
  return v;
}

KnowledgeIndex build_index(const std::vector<FactDoc>& docs) {
  if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "no documents");
  KnowledgeIndex index;
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    if (d.fact_id.empty()) throw Error(ErrorCode::InvalidArgument, "fact without id");
    if (text::trim(d.text).empty()) throw Error(ErrorCode::InvalidArgument, "fact " + d.fact_id + " has empty text");
    if (index.docs.count(d.fact_id)) throw Error(ErrorCode::DuplicateRecordId, "fact id " + d.fact_id);
    index.docs[d.fact_id] = d;
    auto toks = text::tokenize(d.text);
    std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df[t];
  }
  std::size_t next = 0;
  for (const auto& [term, count] : df) index.vocabulary[term] = next++;
  index.idf.resize(df.size());
  const double n = static_cast<double>(docs.size());
  for (const auto& [term, count] : df) {
    index.idf[index.vocabulary[term]] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  }
  for (const auto& d : docs) {
    auto v = index.vectorize(d.text);
    if (v.empty()) {
      index.warnings.push_back("fact " + d.fact_id + " has no indexable terms; excluded");
      continue;
    }
    index.doc_vectors[d.fact_id] = std::move(v);
  }
  if (index.doc_vectors.empty()) throw Error(ErrorCode::EmptyCorpus, "no document has indexable terms");
  return index;
}

std::vector<FactDoc> parse_corpus_jsonl(std::string_view content) {
  std::vector<FactDoc> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(fact_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<FactDoc> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_corpus_jsonl(ss.str());
}

std::string enrich_query(const std::string& q, const FactorContribution& drivers,
                         const DiscreteEvidence& evidence, const std::string& prediction, int top_m) {
  if (top_m <= 0) return q;
  std::string out = q;
  int used = 0;
  for (const auto& [factor, score] : drivers.ranked) {
    if (used >= top_m) break;
    auto label = evidence.labels.find(factor);
    if (label == evidence.labels.end()) continue;
    out += " " + factor + " " + label->second;
    ++used;
  }
  if (!prediction.empty()) out += " " + prediction;
  return out;
}

std::vector<FactDoc> RetrievalResult::facts() const {
  std::vector<FactDoc> out;
  for (const auto& [doc, score] : hits) out.push_back(doc);
  return out;
}

namespace {

void rank_hits(std::vector<std::pair<FactDoc, double>>& hits, int k) {
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.fact_id < b.first.fact_id;
  });
  if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
}

}  // namespace

RetrievalResult retrieve(const KnowledgeIndex& index, const std::string& enriched_query, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  RetrievalResult r;
  r.enriched_query = enriched_query;
  const auto qv = index.vectorize(enriched_query);
  if (qv.empty()) {
    r.empty_query_vector = true;
    return r;
  }
  for (const auto& [id, dv] : index.doc_vectors) {
    const double s = dot(qv, dv);
    if (s > 0.0) r.hits.emplace_back(index.docs.at(id), s);
  }
  rank_hits(r.hits, k);
  return r;
}

RetrievalResult TfidfRetriever::retrieve(const std::string& enriched_query, int k) const {
  return care::retrieve(*index_, enriched_query, k);
}

RemoteEmbeddingRetriever::RemoteEmbeddingRetriever(std::string endpoint, std::vector<FactDoc> docs,
                                                   std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout), docs_(std::move(docs)) {
  if (docs_.empty()) throw Error(ErrorCode::EmptyCorpus, "no documents");
  std::vector<std::string> texts;
  for (const auto& d : docs_) texts.push_back(d.text);
  doc_vectors_ = embed(texts);
}

std::vector<std::vector<double>> RemoteEmbeddingRetriever::embed(const std::vector<std::string>& texts) const {
  auto reply = http::post_json(endpoint_, json{{"texts", texts}}, {}, timeout_);
  std::vector<std::vector<double>> vecs;
  try {
    vecs = reply.at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::RemoteUnavailable, std::string("embedding reply lacks vectors: ") + e.what());
  }
  if (vecs.size() != texts.size()) {
    throw Error(ErrorCode::RemoteUnavailable, "embedding endpoint returned " + std::to_string(vecs.size()) +
                                                  " vectors for " + std::to_string(texts.size()) + " texts");
  }
  return vecs;
}

RetrievalResult RemoteEmbeddingRetriever::retrieve(const std::string& enriched_query, int k) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  RetrievalResult r;
  r.enriched_query = enriched_query;
  const auto q = embed({enriched_query}).front();
  double qn = 0.0;
  for (double x : q) qn += x * x;
  if (qn == 0.0) {
    r.empty_query_vector = true;
    return r;
  }
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    const auto& d = doc_vectors_[i];
    if (d.size() != q.size()) throw Error(ErrorCode::RemoteUnavailable, "embedding dimension mismatch");
    double dp = 0.0, dn = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dp += q[j] * d[j];
      dn += d[j] * d[j];
    }
    if (dn == 0.0) continue;
    r.hits.emplace_back(docs_[i], dp / std::sqrt(qn * dn));
  }
  rank_hits(r.hits, k);
  return r;
}

json to_json(const FactDoc& d) {
  return json{{"fact_id", d.fact_id}, {"text", d.text}, {"tags", d.tags}, {"source", d.source}};
}

FactDoc fact_from_json(const json& j) {
  FactDoc d;
  d.fact_id = j.at("fact_id").get<std::string>();
  d.text = j.at("text").get<std::string>();
  d.tags = j.value("tags", std::vector<std::string>{});
  d.source = j.value("source", std::string{});
  return d;
}

json to_json(const KnowledgeIndex& index) {
  json docs = json::array();
  for (const auto& [id, d] : index.docs) docs.push_back(to_json(d));
  json vocab = json::array();
  std::vector<std::string> terms(index.vocabulary.size());
  for (const auto& [t, i] : index.vocabulary) terms[i] = t;
  json vectors = json::object();
  for (const auto& [id, v] : index.doc_vectors) {
    json a = json::array();
    for (const auto& [t, w] : v) a.push_back(json::array({t, w}));
    vectors[id] = a;
  }
  return json{{"vocabulary", terms}, {"idf", index.idf}, {"docs", docs}, {"doc_vectors", vectors}};
}

KnowledgeIndex index_from_json(const json& j) {
  KnowledgeIndex index;
  try {
    auto terms = j.at("vocabulary").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < terms.size(); ++i) index.vocabulary[terms[i]] = i;
    index.idf = j.at("idf").get<std::vector<double>>();
    for (const auto& d : j.at("docs")) {
      auto f = fact_from_json(d);
      index.docs[f.fact_id] = f;
    }
    for (const auto& [id, a] : j.at("doc_vectors").items()) {
      SparseVector v;
      for (const auto& e : a) v.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<double>());
      index.doc_vectors[id] = std::move(v);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed index JSON: ") + e.what());
  }
  if (index.idf.size() != index.vocabulary.size()) throw Error(ErrorCode::InvalidArgument, "idf/vocabulary size mismatch");
  return index;
}

json to_json(const RetrievalResult& r) {
  json hits = json::array();
  for (const auto& [d, s] : r.hits) {
    auto j = to_json(d);
    j["score"] = s;
    hits.push_back(j);
  }
  return json{{"enriched_query", r.enriched_query}, {"hits", hits}, {"empty_query_vector", r.empty_query_vector}};
}

}  // namespace care
