#include "care/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "care/error.hpp"
#include "care/text.hpp"

namespace care {

using json = nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

}  // namespace

void PipelineConfig::validate() const {
  require(!schema.empty(), "schema must not be empty");
  require(std::set<std::string>(schema.begin(), schema.end()).size() == schema.size(), "schema has duplicates");
  require(!outcome.empty(), "outcome name must not be empty");
  require(outcome_states.size() >= 2, "outcome needs at least two states");
  require(num_bins >= 2, "num_bins must be >= 2");
  require(pseudocount > 0.0, "pseudocount must be > 0");
  require(max_parents >= 0, "max_parents must be >= 0");
  require(retrieval.backend == "tfidf" || retrieval.backend == "remote-embedding", "unknown retrieval backend");
  require(retrieval.backend != "remote-embedding" || !retrieval.embedding_endpoint.empty(),
          "remote-embedding retrieval needs an endpoint");
  require(retrieval.k >= 1, "retrieval.k must be >= 1");
  require(retrieval.top_m >= 0, "retrieval.top_m must be >= 0");
  require(retrieval.match_threshold > 0.0 && retrieval.match_threshold <= 1.0, "match_threshold must be in (0,1]");
  require(verifier.hr_threshold >= 0.0 && verifier.hr_threshold <= 1.0, "hr_threshold must be in [0,1]");
  require(counterfactual_max_edits >= 1 && counterfactual_max_edits <= kMaxCounterfactualEdits,
          "counterfactual_max_edits must be 1 or 2");
  require(crc_top_n >= 1, "crc_top_n must be >= 1");
  require(scp_threshold > 0.0 && scp_threshold <= 1.0, "scp_threshold must be in (0,1]");
  generator.validate();
}

std::vector<std::string> PipelineConfig::effective_ordering() const {
  if (!constraints.ordering.empty()) return constraints.ordering;
  auto out = schema;
  out.push_back(outcome);
  return out;
}

void PipelineConfig::resolve_paths(const std::filesystem::path& base) {
  for (auto* p : {&paths.store, &paths.artifacts, &paths.corpus, &paths.lexicon, &paths.descriptor_map}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
}

json to_json(const PipelineConfig& c) {
  return json{{"schema", c.schema},
              {"outcome", c.outcome},
              {"outcome_states", c.outcome_states},
              {"num_bins", c.num_bins},
              {"pseudocount", c.pseudocount},
              {"max_parents", c.max_parents},
              {"constraints", to_json(c.constraints)},
              {"retrieval",
               {{"backend", c.retrieval.backend},
                {"embedding_endpoint", c.retrieval.embedding_endpoint},
                {"k", c.retrieval.k},
                {"top_m", c.retrieval.top_m},
                {"match_threshold", c.retrieval.match_threshold}}},
              {"verifier", {{"hr_threshold", c.verifier.hr_threshold}, {"fallback_enabled", c.verifier.fallback_enabled}}},
              {"generator", to_json(c.generator)},
              {"counterfactual_max_edits", c.counterfactual_max_edits},
              {"crc_top_n", c.crc_top_n},
              {"scp_threshold", c.scp_threshold},
              {"paths",
               {{"store", c.paths.store},
                {"artifacts", c.paths.artifacts},
                {"corpus", c.paths.corpus},
                {"lexicon", c.paths.lexicon},
                {"descriptor_map", c.paths.descriptor_map}}},
              {"seed", c.seed},
              {"cors_origin", c.cors_origin}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  try {
    c.schema = j.value("schema", c.schema);
    c.outcome = j.value("outcome", c.outcome);
    c.outcome_states = j.value("outcome_states", c.outcome_states);
    c.num_bins = j.value("num_bins", c.num_bins);
    c.pseudocount = j.value("pseudocount", c.pseudocount);
    c.max_parents = j.value("max_parents", c.max_parents);
    if (j.contains("constraints")) c.constraints = constraints_from_json(j.at("constraints"));
    if (j.contains("retrieval")) {
      const auto& r = j.at("retrieval");
      c.retrieval.backend = r.value("backend", c.retrieval.backend);
      c.retrieval.embedding_endpoint = r.value("embedding_endpoint", c.retrieval.embedding_endpoint);
      c.retrieval.k = r.value("k", c.retrieval.k);
      c.retrieval.top_m = r.value("top_m", c.retrieval.top_m);
      c.retrieval.match_threshold = r.value("match_threshold", c.retrieval.match_threshold);
    }
    if (j.contains("verifier")) {
      const auto& v = j.at("verifier");
      c.verifier.hr_threshold = v.value("hr_threshold", c.verifier.hr_threshold);
      c.verifier.fallback_enabled = v.value("fallback_enabled", c.verifier.fallback_enabled);
    }
    if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
    c.counterfactual_max_edits = j.value("counterfactual_max_edits", c.counterfactual_max_edits);
    c.crc_top_n = j.value("crc_top_n", c.crc_top_n);
    c.scp_threshold = j.value("scp_threshold", c.scp_threshold);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.paths.store = p.value("store", c.paths.store);
      c.paths.artifacts = p.value("artifacts", c.paths.artifacts);
      c.paths.corpus = p.value("corpus", c.paths.corpus);
      c.paths.lexicon = p.value("lexicon", c.paths.lexicon);
      c.paths.descriptor_map = p.value("descriptor_map", c.paths.descriptor_map);
    }
    c.seed = j.value("seed", c.seed);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig read_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "config " + path.string() + " is not JSON: " + e.what());
  }
  auto c = pipeline_config_from_json(j);
  c.resolve_paths(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  return c;
}

std::string config_fingerprint(const PipelineConfig& c) { return text::fnv1a_hex(to_json(c).dump()); }

}  // namespace care
