#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "care/counterfactual.hpp"
#include "care/service.hpp"
#include "fixture.hpp"

using namespace care;
using nlohmann::json;

namespace {

const fixture::Built& built() {
  static const auto b = fixture::build("svc", 24);
  return b;
}

std::map<std::string, int> zero_based(const DiscreteEvidence& e) {
  std::map<std::string, int> m;
  for (const auto& [k, v] : e.bins) m[k] = v - 1;
  return m;
}

std::string csv_of(const EcgRecord& rec) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t c = 0; c < rec.lead_names.size(); ++c) out << (c ? "," : "") << rec.lead_names[c];
  out << "\n";
  for (std::size_t t = 0; t < rec.samples[0].size(); ++t) {
    for (std::size_t c = 0; c < rec.samples.size(); ++c) out << (c ? "," : "") << rec.samples[c][t];
    out << "\n";
  }
  return out.str();
}

struct Running {
  Service& svc;
  std::thread th;
  explicit Running(Service& s) : svc(s) {
    svc.bind("127.0.0.1", 0);
    th = std::thread([this] { svc.serve(); });
  }
  ~Running() {
    svc.stop();
    th.join();
  }
};

}  // namespace

TEST_CASE("status mapping") {
  CHECK(http_status(ErrorCode::NotFound) == 404);
  CHECK(http_status(ErrorCode::ZeroProbabilityEvidence) == 409);
  CHECK(http_status(ErrorCode::UnknownState) == 400);
  CHECK(http_status(ErrorCode::RemoteUnavailable) == 502);
  CHECK(http_status(ErrorCode::IoError) == 500);
}

TEST_CASE("read endpoints match direct library calls") {
  const auto h = load_handle(built().config);
  Service svc(h);
  const auto health = svc.dispatch("GET", "/health", "");
  CHECK(health.status == 200);
  CHECK(health.body.at("version") == h->version);
  CHECK(svc.dispatch("GET", "/graph", "").body == to_json(h->network));
  CHECK(svc.dispatch("GET", "/records", "").body.at("records").size() == 24);

  for (const auto& e : built().entries) {
    const auto& id = e.record_id;
    const auto ev = h->evidence(id);
    const auto post = svc.dispatch("GET", "/records/" + id + "/posterior", "");
    REQUIRE(post.status == 200);
    // Enumeration oracle over the fitted network.
    const auto want = oracle::enumerate_posterior(h->network, zero_based(ev), "outcome");
    const auto states = h->network.node("outcome").states;
    REQUIRE(states.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k)
      CHECK(std::abs(post.body.at("probs").at(states[k]).get<double>() - want[k]) <= 1e-9);

    const auto same = svc.dispatch("POST", "/records/" + id + "/whatif", R"({"overrides":{}})");
    CHECK(same.body == post.body);
    CHECK(svc.dispatch("GET", "/records/" + id + "/drivers", "").body ==
          to_json(rank_contributions(h->network, ev, "outcome")));
    const auto cf = svc.dispatch("POST", "/records/" + id + "/counterfactual", R"({"target":"Normal","max_edits":2})");
    CHECK(cf.status == 200);
    CHECK(cf.body == to_json(find_counterfactual(h->network, ev, "outcome", "Normal", 2), h->network, ev));
    const auto bio = svc.dispatch("GET", "/records/" + id + "/biomarkers", "");
    CHECK(bio.body.at("evidence").at("bins") == json(ev.bins));
  }
}

TEST_CASE("explain matches the in-process pipeline") {
  const auto h = load_handle(built().config);
  Service svc(h);
  const auto& id = built().entries.front().record_id;
  const auto r = svc.dispatch("POST", "/records/" + id + "/explain", R"({"query":"Is this ECG abnormal?"})");
  REQUIRE(r.status == 200);
  const auto c = explain_record(*h, id, "Is this ECG abnormal?");
  CHECK(r.body == audit_json(c.message, c.payload));
  const auto off = svc.dispatch("POST", "/records/" + id + "/explain", R"({"query":"q","fallback_enabled":false})");
  CHECK(off.status == 200);
}

TEST_CASE("errors map to statuses") {
  const auto h = load_handle(built().config);
  Service svc(h);
  const auto& id = built().entries.front().record_id;
  CHECK(svc.dispatch("GET", "/records/nope/posterior", "").status == 404);
  CHECK(svc.dispatch("GET", "/nowhere", "").status == 404);
  CHECK(svc.dispatch("DELETE", "/records/" + id, "").status == 404);
  CHECK(svc.dispatch("POST", "/records/" + id + "/whatif", "{bad").status == 400);
  CHECK(svc.dispatch("POST", "/records/" + id + "/whatif", "[1]").status == 400);
  CHECK(svc.dispatch("POST", "/records/" + id + "/whatif", R"({"overrides":{"zzz":1}})").status == 400);
  CHECK(svc.dispatch("POST", "/records/" + id + "/counterfactual", "{}").status == 400);
  const auto bad = svc.dispatch("POST", "/records/" + id + "/counterfactual", R"({"target":"Maybe"})");
  CHECK(bad.status == 400);
  CHECK(bad.body.at("code") == "UnknownState");
  CHECK(svc.dispatch("POST", "/records", R"({"format":"edf"})").status == 400);

  // A factor CPT that puts all mass on bin 1 makes any other observed bin impossible.
  auto z = std::make_shared<PipelineHandle>(*h);
  std::string target_id;
  std::string node;
  for (const auto& e : built().entries) {
    for (const auto& [n, b] : h->evidence(e.record_id).bins) {
      if (b != 1 && target_id.empty()) {
        target_id = e.record_id;
        node = n;
      }
    }
  }
  REQUIRE(!target_id.empty());
  for (auto& row : z->network.cpts[node].rows) {
    std::fill(row.begin(), row.end(), 0.0);
    row[0] = 1.0;
  }
  svc.swap(z);
  const auto zero = svc.dispatch("GET", "/records/" + target_id + "/posterior", "");
  CHECK(zero.status == 409);
  CHECK(zero.body.at("code") == "ZeroProbabilityEvidence");
}

TEST_CASE("upload then read back over a real socket") {
  const auto h = load_handle(built().config);
  Service svc(h);
  Running run(svc);
  REQUIRE(svc.port() > 0);
  httplib::Client cli("127.0.0.1", svc.port());

  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");
  auto opts = cli.Options("/records");
  REQUIRE(opts);
  CHECK(opts->status == 204);
  CHECK(opts->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  const auto rec = sample_case(default_synthetic_spec(), 777).record;
  json up{{"format", "csv"}, {"record_id", "upload-1"}, {"patient_id", "p9"}, {"content", csv_of(rec)}};
  auto posted = cli.Post("/records", up.dump(), "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 201);
  CHECK(json::parse(posted->body).at("num_samples") == rec.samples[0].size());

  auto dup = cli.Post("/records", up.dump(), "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 400);

  auto bio = cli.Get("/records/upload-1/biomarkers");
  REQUIRE(bio);
  CHECK(bio->status == 200);
  auto direct = WaveformEncoder(h->config.schema).encode(rec);
  direct.record_id = "upload-1";
  const auto got = json::parse(bio->body).at("biomarkers");
  CHECK(got == to_json(direct));

  auto post = cli.Get("/records/upload-1/posterior");
  REQUIRE(post);
  CHECK(post->status == 200);
  auto missing = cli.Get("/records/none");
  REQUIRE(missing);
  CHECK(missing->status == 404);
}

TEST_CASE("concurrent requests during a handle swap") {
  const auto h = load_handle(built().config);
  Service svc(h);
  Running run(svc);
  const auto& ids = built().entries;
  std::map<std::string, std::string> expected;
  for (const auto& e : ids) expected[e.record_id] = svc.dispatch("GET", "/records/" + e.record_id + "/posterior", "").body.dump();

  std::atomic<int> bad{0};
  std::atomic<int> done{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 6; ++w) {
    workers.emplace_back([&, w] {
      httplib::Client cli("127.0.0.1", svc.port());
      for (int i = 0; i < 15; ++i) {
        const auto& id = ids[static_cast<std::size_t>(w * 15 + i) % ids.size()].record_id;
        auto r = cli.Get("/records/" + id + "/posterior");
        if (!r || r->status != 200 || r->body != expected[id]) ++bad;
        ++done;
      }
    });
  }
  // Swapping in an identical reload must not disturb answers.
  for (int i = 0; i < 5; ++i) svc.swap(load_handle(built().config));
  for (auto& t : workers) t.join();
  CHECK(done == 90);
  CHECK(bad == 0);
}
