#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "care/biomarker.hpp"
#include "care/error.hpp"
#include "care/signal_io.hpp"
#include "care/synthetic.hpp"
#include "care/text.hpp"
#include "oracle.hpp"

using namespace care;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FactorRanges& ranges_of(SyntheticSpec& s, const std::string& name) {
  for (auto& f : s.factors) {
    if (f.name == name) return f;
  }
  throw std::runtime_error("no factor " + name);
}

}  // namespace

TEST_CASE("default spec is valid and serializes") {
  const auto s = default_synthetic_spec();
  CHECK_NOTHROW(s.validate());
  const auto back = synthetic_spec_from_json(to_json(s));
  CHECK(to_json(back).dump() == to_json(s).dump());
  CHECK(s.network.edges.count({"qtc_bazett_ms", "outcome"}) == 1);
  CHECK(s.network.edges.count({"rr_rmssd_ms", "outcome"}) == 1);
  CHECK(s.network.edges.count({"qt_interval_ms", "qtc_bazett_ms"}) == 1);
}

TEST_CASE("invalid specs are rejected") {
  auto s = default_synthetic_spec();
  ranges_of(s, "qt_interval_ms").bins[1] = {350, 410};
  try {
    s.validate();
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpecInvalid);
  }
  auto t = default_synthetic_spec();
  t.network.cpts["pr_interval_ms"].rows[0] = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(t.validate(), Error);
  auto u = default_synthetic_spec();
  ranges_of(u, "qrs_duration_ms").bins[2] = {110, 190};
  CHECK_THROWS_AS(u.validate(), Error);
  CHECK_THROWS_AS(sample_case(u, 1), Error);
}

TEST_CASE("same seed gives bit-identical records") {
  const auto s = default_synthetic_spec();
  const auto a = sample_case(s, 99);
  const auto b = sample_case(s, 99);
  REQUIRE(a.record.samples.size() == b.record.samples.size());
  for (std::size_t c = 0; c < a.record.samples.size(); ++c) {
    for (std::size_t t = 0; t < a.record.samples[c].size(); ++t) {
      REQUIRE(std::bit_cast<std::uint64_t>(a.record.samples[c][t]) ==
              std::bit_cast<std::uint64_t>(b.record.samples[c][t]));
    }
  }
  CHECK(a.evidence.bins == b.evidence.bins);
  CHECK(a.truth.values == b.truth.values);
  CHECK(sample_case(s, 100).truth.values != a.truth.values);
}

TEST_CASE("truth values fall in their bin ranges and qtc is derived") {
  const auto s = default_synthetic_spec();
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto c = sample_case(s, seed);
    for (const auto& f : s.factors) {
      const double v = c.truth.get(f.name).value();
      const int bin = c.evidence.bins.at(f.name);
      if (f.derived) {
        const double qt = c.truth.get("qt_interval_ms").value();
        const double hr = c.truth.get("heart_rate_bpm").value();
        CHECK(std::abs(v - qt * std::sqrt(hr / 60.0)) <= 1e-9 * v);
        int expect = 1;
        for (double cut : f.cut_points) expect += cut < v;
        CHECK(bin == expect);
      } else {
        const auto [lo, hi] = f.bins[static_cast<std::size_t>(bin - 1)];
        CHECK(v >= lo);
        CHECK(v <= hi);
      }
    }
  }
}

TEST_CASE("heart rate range [58,62] gives mean RR in [967,1034] ms") {
  auto s = default_synthetic_spec();
  ranges_of(s, "heart_rate_bpm").bins[1] = {58, 62};
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 10 && seed < 500; ++seed) {
    const auto c = sample_case(s, seed);
    if (c.evidence.bins.at("heart_rate_bpm") != 2) continue;
    const auto peaks = detect_r_peaks(c.record, "II");
    REQUIRE(peaks.size() >= 3);
    const double mean_rr =
        1000.0 * static_cast<double>(peaks.back() - peaks.front()) / ((peaks.size() - 1) * s.sampling_rate_hz);
    // Two samples of quantization slack at 500 Hz.
    CHECK(mean_rr >= 967.0 - 4.0);
    CHECK(mean_rr <= 1034.0 + 4.0);
    ++checked;
  }
  CHECK(checked == 10);
}

namespace {

// Largest |empirical - expected| over every bin of every node.
double max_marginal_gap(const SyntheticSpec& s, const LabeledEvidenceSet& data,
                        const std::map<std::string, std::vector<double>>& want) {
  double gap = 0.0;
  for (const auto& node : s.network.nodes) {
    std::vector<double> freq(node.states.size(), 0.0);
    for (const auto& [ev, label] : data.rows) {
      if (node.name == s.outcome) {
        const auto it = std::find(node.states.begin(), node.states.end(), *label);
        freq[static_cast<std::size_t>(it - node.states.begin())] += 1.0;
      } else {
        freq[static_cast<std::size_t>(ev.bins.at(node.name) - 1)] += 1.0;
      }
    }
    const auto n = static_cast<double>(data.rows.size());
    for (std::size_t k = 0; k < freq.size(); ++k) gap = std::max(gap, std::abs(freq[k] / n - want.at(node.name)[k]));
  }
  return gap;
}

}  // namespace

TEST_CASE("sampled evidence matches ground-truth marginals") {
  const auto s = default_synthetic_spec();
  const auto lib = ground_truth_marginals(s);
  std::map<std::string, std::vector<double>> want;
  for (const auto& node : s.network.nodes) {
    // Independent oracle: marginal by full enumeration of the joint.
    want[node.name] = oracle::enumerate_posterior(s.network, {}, node.name);
    REQUIRE(lib.at(node.name).size() == want[node.name].size());
    for (std::size_t k = 0; k < want[node.name].size(); ++k)
      CHECK(std::abs(lib.at(node.name)[k] - want[node.name][k]) <= 1e-12);
  }
  // Bias check: sd of a bin share at n=20000 is about 0.0033.
  CHECK(max_marginal_gap(s, sample_evidence(s, 20000, 42), want) <= 0.01);

  // The +-0.05 band at n=500 holds for every bin only about 2/3 of the time
  // even for ideal multinomial sampling, so it is checked as a rate.
  std::mt19937_64 rng(5);
  int ideal_pass = 0;
  int pass = 0;
  const int seeds = 100;
  for (int i = 0; i < seeds; ++i) {
    pass += max_marginal_gap(s, sample_evidence(s, 500, static_cast<std::uint64_t>(i + 1)), want) <= 0.05;
    LabeledEvidenceSet ideal;
    std::discrete_distribution<int> outcome(want.at(s.outcome).begin(), want.at(s.outcome).end());
    for (int r = 0; r < 500; ++r) {
      DiscreteEvidence ev;
      for (const auto& node : s.network.nodes) {
        if (node.name == s.outcome) continue;
        std::discrete_distribution<int> d(want.at(node.name).begin(), want.at(node.name).end());
        ev.bins[node.name] = d(rng) + 1;
      }
      ideal.rows.emplace_back(ev, s.network.node(s.outcome).states[static_cast<std::size_t>(outcome(rng))]);
    }
    ideal_pass += max_marginal_gap(s, ideal, want) <= 0.05;
  }
  MESSAGE("n=500 within 0.05: sampler " << pass << "/" << seeds << ", ideal multinomial " << ideal_pass << "/" << seeds);
  CHECK(pass >= 50);
  CHECK(std::abs(pass - ideal_pass) <= 20);
}

TEST_CASE("evidence sets agree with full cases") {
  const auto s = default_synthetic_spec();
  const auto data = sample_evidence(s, 5, 3);
  const auto seeds = case_seeds(3, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto c = sample_case(s, seeds[i]);
    CHECK(c.evidence.bins == data.rows[i].first.bins);
    CHECK(c.outcome == *data.rows[i].second);
  }
}

TEST_CASE("dataset generation") {
  const auto s = default_synthetic_spec();
  const auto empty = oracle::temp_dir("syn0");
  CHECK(generate_dataset(s, 0, 42, empty).empty());
  CHECK(slurp(empty / "manifest.jsonl").empty());

  const auto a = oracle::temp_dir("synA");
  const auto b = oracle::temp_dir("synB");
  const auto ea = generate_dataset(s, 12, 42, a);
  generate_dataset(s, 12, 42, b);
  CHECK(text::fnv1a_hex(slurp(a / "manifest.jsonl")) == text::fnv1a_hex(slurp(b / "manifest.jsonl")));
  RecordStore store(a / "store");
  CHECK(store.list_records().size() == 12);
  std::istringstream lines(slurp(a / "manifest.jsonl"));
  std::size_t i = 0;
  for (std::string line; std::getline(lines, line); ++i) {
    const auto e = dataset_entry_from_json(nlohmann::json::parse(line));
    CHECK(e.record_id == ea[i].record_id);
    CHECK(e.evidence.bins == ea[i].evidence.bins);
    CHECK(store.contains(e.record_id));
  }
  CHECK(i == 12);
}
