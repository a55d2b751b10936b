#include "care/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "care/error.hpp"
#include "care/text.hpp"

namespace care {

using json = nlohmann::json;
namespace fs = std::filesystem;

FitResult fit_model(const std::vector<BiomarkerVector>& vectors, const std::map<std::string, std::string>& labels,
                    const PipelineConfig& cfg) {
  cfg.validate();
  FitResult r;
  r.discretizer = fit_discretizer(vectors, cfg.num_bins, cfg.schema);

  std::set<std::string> active;
  for (const auto& f : cfg.schema) {
    if (r.discretizer.degenerate.count(f)) {
      r.warnings.push_back("factor " + f + " is constant in the training data and is left out of the graph");
    } else {
      active.insert(f);
    }
  }
  auto& data = r.data;
  data.outcome = cfg.outcome;
  for (const auto& f : cfg.schema) {
    if (active.count(f)) data.schema.push_back({f, r.discretizer.bin_labels});
  }
  data.schema.push_back({cfg.outcome, cfg.outcome_states});
  const std::set<std::string> states(cfg.outcome_states.begin(), cfg.outcome_states.end());
  for (const auto& v : vectors) {
    auto e = discretize(r.discretizer, v);
    for (auto it = e.bins.begin(); it != e.bins.end();) {
      if (active.count(it->first)) {
        ++it;
      } else {
        e.labels.erase(it->first);
        it = e.bins.erase(it);
      }
    }
    std::optional<std::string> label;
    if (auto l = labels.find(v.record_id); l != labels.end()) {
      if (!states.count(l->second)) {
        throw Error(ErrorCode::UnknownState, "label '" + l->second + "' of " + v.record_id + " is not an outcome state");
      }
      label = l->second;
    }
    data.rows.emplace_back(std::move(e), label);
  }

  auto known = [&](const std::string& n) { return n == cfg.outcome || active.count(n) > 0; };
  EdgeConstraints priors;
  for (const auto& n : cfg.effective_ordering()) {
    if (known(n)) priors.ordering.push_back(n);
  }
  for (const auto* list : {&cfg.constraints.required, &cfg.constraints.forbidden}) {
    for (const auto& e : *list) {
      if (known(e.first) && known(e.second)) {
        (list == &cfg.constraints.required ? priors.required : priors.forbidden).push_back(e);
      } else {
        r.warnings.push_back("constraint " + e.first + " -> " + e.second + " names a node outside the graph; dropped");
      }
    }
  }
  r.network = fit_cpts(learn_structure(data, priors, cfg.max_parents), data, cfg.pseudocount);
  return r;
}

// --- files -----------------------------------------------------------------------

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    f << j.dump(2) << "\n";
    if (!f) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + " is not JSON: " + e.what());
  }
}

void save_artifacts(const fs::path& dir, const DiscretizerModel& d, const CausalNetwork& n) {
  write_json_file(dir / "discretizer.json", to_json(d));
  write_json_file(dir / "network.json", to_json(n));
}

void save_index(const fs::path& dir, const KnowledgeIndex& index) { write_json_file(dir / "index.json", to_json(index)); }

Artifacts load_artifacts(const fs::path& dir) {
  Artifacts a;
  for (const char* name : {"discretizer.json", "network.json"}) {
    if (!fs::exists(dir / name)) {
      throw Error(ErrorCode::MissingArtifact, (dir / name).string() + " (run `fit` first)");
    }
  }
  a.discretizer = discretizer_from_json(read_json_file(dir / "discretizer.json"));
  a.network = network_from_json(read_json_file(dir / "network.json"));
  if (fs::exists(dir / "index.json")) {
    a.index = std::make_shared<const KnowledgeIndex>(index_from_json(read_json_file(dir / "index.json")));
  }
  return a;
}

std::map<std::string, BiomarkerVector> encode_store(const RecordStore& store, const Encoder& encoder) {
  std::map<std::string, BiomarkerVector> out;
  for (const auto& id : store.list_records()) out[id] = encoder.encode(store.load(id));
  return out;
}

json to_json(const std::map<std::string, BiomarkerVector>& table) {
  json a = json::array();
  for (const auto& [id, v] : table) a.push_back(to_json(v));
  return a;
}

std::map<std::string, BiomarkerVector> biomarker_table_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "biomarker table must be a JSON array");
  std::map<std::string, BiomarkerVector> out;
  for (const auto& e : j) {
    auto v = biomarkers_from_json(e);
    if (out.count(v.record_id)) throw Error(ErrorCode::DuplicateRecordId, v.record_id);
    out[v.record_id] = std::move(v);
  }
  return out;
}

// --- handle ------------------------------------------------------------------------

BiomarkerVector PipelineHandle::biomarkers(const std::string& record_id) const {
  if (auto it = vectors.find(record_id); it != vectors.end()) return it->second;
  const auto rec = store->read([&](const RecordStore& s) {
    if (!s.contains(record_id)) throw Error(ErrorCode::NotFound, "record " + record_id);
    return s.load(record_id);
  });
  return WaveformEncoder(config.schema).encode(rec);
}

DiscreteEvidence PipelineHandle::evidence(const std::string& record_id) const {
  auto e = discretize(discretizer, biomarkers(record_id));
  e.record_id = record_id;
  return e;
}

Generator PipelineHandle::generator() const { return make_generator(config.generator); }

OrchestrationOptions PipelineHandle::orchestration() const {
  OrchestrationOptions o;
  o.k = config.retrieval.k;
  o.top_m = config.retrieval.top_m;
  o.max_edits = config.counterfactual_max_edits;
  o.respond.fallback_enabled = config.verifier.fallback_enabled;
  o.respond.hr_threshold = config.verifier.hr_threshold;
  o.respond.match_threshold = config.retrieval.match_threshold;
  return o;
}

std::shared_ptr<const PipelineHandle> load_handle(const PipelineConfig& cfg) {
  cfg.validate();
  auto h = std::make_shared<PipelineHandle>();
  h->config = cfg;
  h->store = std::make_shared<SharedStore>(cfg.paths.store);
  const fs::path dir = cfg.paths.artifacts;
  auto a = load_artifacts(dir);
  h->discretizer = std::move(a.discretizer);
  h->network = std::move(a.network);
  if (!h->network.has_node(cfg.outcome)) {
    throw Error(ErrorCode::SchemaMismatch, "fitted network has no outcome node " + cfg.outcome);
  }
  if (fs::exists(dir / "biomarkers.json")) h->vectors = biomarker_table_from_json(read_json_file(dir / "biomarkers.json"));

  std::vector<FactDoc> corpus;
  if (!cfg.paths.corpus.empty()) corpus = read_corpus_jsonl(cfg.paths.corpus);
  h->index = a.index;
  if (!h->index && !corpus.empty()) h->index = std::make_shared<const KnowledgeIndex>(build_index(corpus));
  if (cfg.retrieval.backend == "remote-embedding") {
    if (corpus.empty()) throw Error(ErrorCode::MissingArtifact, "remote-embedding retrieval needs paths.corpus");
    h->retriever = std::make_shared<RemoteEmbeddingRetriever>(cfg.retrieval.embedding_endpoint, corpus,
                                                              cfg.generator.timeout);
  } else if (h->index) {
    h->retriever = std::make_shared<TfidfRetriever>(h->index);
  }
  if (!cfg.paths.lexicon.empty()) h->lexicon = read_scp_lexicon(cfg.paths.lexicon);
  if (!cfg.paths.descriptor_map.empty()) h->descriptors = descriptor_map_from_json(read_json_file(cfg.paths.descriptor_map));
  h->version = text::fnv1a_hex(to_json(h->network).dump() + to_json(h->discretizer).dump() + config_fingerprint(cfg));
  return h;
}

CaseResult explain_record(const PipelineHandle& h, const std::string& record_id, const std::string& query,
                          std::optional<bool> fallback_enabled) {
  const auto current = h.biomarkers(record_id);
  auto evidence = discretize(h.discretizer, current);
  evidence.record_id = record_id;

  const auto* vectors = &h.vectors;
  std::map<std::string, BiomarkerVector> extended;
  if (!h.vectors.count(record_id)) {
    extended = h.vectors;
    extended[record_id] = current;
    vectors = &extended;
  }
  const auto history = h.store->read([&](const RecordStore& s) { return history_agent(s, *vectors, record_id); });

  auto opts = h.orchestration();
  if (fallback_enabled) opts.respond.fallback_enabled = *fallback_enabled;
  StageFlags flags;
  flags.rag = h.retriever != nullptr;
  return orchestrate(h.network, h.config.outcome, evidence, query, history, h.lexicon.outcome_terms,
                     h.retriever.get(), h.generator(), flags, opts);
}

}  // namespace care
