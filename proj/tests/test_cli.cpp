#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "care/cli.hpp"
#include "care/config.hpp"
#include "care/counterfactual.hpp"
#include "care/pipeline.hpp"
#include "care/synthetic.hpp"
#include "care/text.hpp"
#include "oracle.hpp"

using namespace care;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run carex(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& root) {
  json j = to_json(PipelineConfig{});
  j["paths"]["store"] = "data/store";
  j["paths"]["artifacts"] = "artifacts";
  j["paths"]["corpus"] = std::string(CARE_DATA_DIR) + "/corpus.jsonl";
  j["paths"]["lexicon"] = std::string(CARE_DATA_DIR) + "/scp_lexicon.json";
  j["paths"]["descriptor_map"] = std::string(CARE_DATA_DIR) + "/descriptors.json";
  const auto p = root / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("usage errors") {
  const auto r = carex({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(carex({}).code == 1);
  CHECK(carex({"--help"}).code == 0);
  CHECK(carex({"counterfactual", "x"}).code == 1);  // --target missing
}

TEST_CASE("exit codes by error class") {
  CHECK(cli::exit_code(ErrorCode::IoError) == 2);
  CHECK(cli::exit_code(ErrorCode::MissingArtifact) == 2);
  CHECK(cli::exit_code(ErrorCode::RemoteUnavailable) == 3);
  CHECK(cli::exit_code(ErrorCode::Timeout) == 3);
  CHECK(cli::exit_code(ErrorCode::UnknownState) == 1);
  const auto root = oracle::temp_dir("cli-missing");
  const auto r = carex({"--store", (root / "s").string(), "--artifacts", (root / "a").string(), "infer", "r1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("MissingArtifact") != std::string::npos);
  CHECK(carex({"--config", (root / "none.json").string(), "infer", "r1"}).code == 2);
}

TEST_CASE("config file round trip") {
  const auto root = oracle::temp_dir("cli-cfg");
  const auto p = write_config(root);
  const auto cfg = read_pipeline_config(p);
  CHECK(cfg.paths.store == (root / "data/store").string());
  CHECK(cfg.retrieval.k == 5);
  CHECK(to_json(pipeline_config_from_json(to_json(cfg))) == to_json(cfg));
  json bad = json::parse(slurp(p));
  bad["retrieval"]["k"] = 0;
  std::ofstream(root / "bad.json") << bad.dump();
  CHECK_THROWS_AS(read_pipeline_config(root / "bad.json"), Error);
}

TEST_CASE("full lifecycle from synthetic data to reports") {
  const auto root = oracle::temp_dir("cli-life");
  const auto cfgp = write_config(root).string();

  auto r = carex({"--config", cfgp, "synth", "-n", "30", "--seed", "5", "--out", (root / "data").string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).at("cases") == 30);
  const auto manifest = (root / "data" / "manifest.jsonl").string();

  r = carex({"--config", cfgp, "encode", "--out", (root / "enc.json").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(root / "artifacts" / "biomarkers.json"));
  CHECK(json::parse(slurp(root / "enc.json")).size() == 30);

  r = carex({"--config", cfgp, "fit", "--labels", manifest});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).at("network").contains("nodes"));

  r = carex({"--config", cfgp, "index"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).at("documents") == 16);

  const auto h = load_handle(read_pipeline_config(cfgp));
  const auto ids = h->store->read([](const RecordStore& s) { return s.list_records(); });
  REQUIRE(!ids.empty());
  const auto& rid = ids.front();

  r = carex({"--config", cfgp, "infer", rid});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out) == to_json(infer_posterior(h->network, h->evidence(rid), "outcome")));

  r = carex({"--config", cfgp, "counterfactual", rid, "--target", "Abnormal", "--max-edits", "2"});
  REQUIRE(r.code == 0);
  const auto e = h->evidence(rid);
  CHECK(json::parse(r.out) == to_json(find_counterfactual(h->network, e, "outcome", "Abnormal", 2), h->network, e));
  CHECK(carex({"--config", cfgp, "counterfactual", rid, "--target", "Maybe"}).code == 1);

  r = carex({"--config", cfgp, "explain", rid, "--query", "Is this abnormal?", "--no-fallback"});
  REQUIRE(r.code == 0);
  const auto expl = json::parse(r.out);
  CHECK(!expl.at("explanation").get<std::string>().empty());
  CHECK(expl.at("used_fallback") == false);
  CHECK(expl.contains("audit"));
  CHECK(carex({"--config", cfgp, "infer", "no-such-record"}).code == 1);

  const auto reports_a = root / "rep-a";
  const auto reports_b = root / "rep-b";
  r = carex({"--config", cfgp, "evaluate", "--manifest", manifest, "--out", reports_a.string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out).at("variants").size() == 5);
  REQUIRE(carex({"--config", cfgp, "evaluate", "--manifest", manifest, "--out", reports_b.string()}).code == 0);
  for (const char* f : {"A0.json", "A4.json", "A4.csv", "ablation_grid.csv", "plot_data.csv"}) {
    CHECK(fs::exists(reports_a / f));
    CHECK(text::fnv1a_hex(slurp(reports_a / f)) == text::fnv1a_hex(slurp(reports_b / f)));
  }
  r = carex({"--config", cfgp, "evaluate", "--manifest", manifest, "--variants", "A9", "--out", reports_a.string()});
  CHECK(r.code == 1);
}

TEST_CASE("ingest a CSV file") {
  const auto root = oracle::temp_dir("cli-ingest");
  const auto rec = sample_case(default_synthetic_spec(), 3).record;
  {
    std::ofstream f(root / "r.csv");
    f.precision(17);
    f << "I,II\n";
    for (std::size_t t = 0; t < rec.samples[0].size(); ++t) f << rec.samples[0][t] << "," << rec.samples[1][t] << "\n";
  }
  auto r = carex({"--store", (root / "s").string(), "ingest", (root / "r.csv").string(), "--patient-id", "p1",
                  "--acquired-at", "100"});
  REQUIRE(r.code == 0);
  RecordStore store(root / "s");
  REQUIRE(store.contains("r"));
  CHECK(store.info("r").patient_id == std::optional<std::string>("p1"));
  r = carex({"--store", (root / "s").string(), "ingest", (root / "r.csv").string()});
  CHECK(r.code == 1);  // duplicate id
  CHECK(carex({"--store", (root / "s").string(), "ingest", (root / "missing.csv").string()}).code == 2);
}
