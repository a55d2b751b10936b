#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "care/grounding.hpp"
#include "care/text.hpp"

using namespace care;

namespace {

std::vector<FactDoc> facts4() {
  return {{"f1", "A prolonged QTc raises arrhythmia risk", {}, ""},
          {"f2", "Low RMSSD reflects reduced variability", {}, ""},
          {"f3", "ST elevation may indicate infarction", {}, ""},
          {"f4", "Resting heart rate of 60 to 100 is normal", {}, ""}};
}

std::string random_words(std::mt19937_64& rng, int n) {
  static const std::vector<std::string> words = {"qt", "risk", "heart", "rate", "st", "low", "high", "normal",
                                                 "wave", "lead", "rhythm", "sinus", "beat", "interval"};
  std::string s;
  for (int i = 0; i < n; ++i) s += words[rng() % words.size()] + " ";
  return s;
}

}  // namespace

TEST_CASE("dice similarity") {
  CHECK(fuzzy_match("qt prolongation present", "qt prolongation present") == 1.0);
  CHECK(fuzzy_match("qt prolongation present", "prolongation of qt") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(fuzzy_match("alpha beta", "gamma delta") == 0.0);
  CHECK(fuzzy_match("", "") == 1.0);
  CHECK(fuzzy_match("", "x") == 0.0);
  CHECK(fuzzy_match("QT, Interval!", "qt interval") == 1.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_words(rng, 1 + static_cast<int>(rng() % 6));
    const auto b = random_words(rng, 1 + static_cast<int>(rng() % 6));
    const double s = fuzzy_match(a, b);
    CHECK(s == fuzzy_match(b, a));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("sentences: tags stripped, decimals kept") {
  const auto s = explanation_sentences("[Fact 1] QTc is 0.45 s. Rate is fine!\nDone?");
  REQUIRE(s.size() == 3);
  CHECK(s[0].find("0.45") != std::string::npos);
  CHECK(s[0].find("[Fact") == std::string::npos);
}

TEST_CASE("hallucination risk takes every quarter value exactly") {
  const auto f = facts4();
  for (int matched = 0; matched <= 4; ++matched) {
    std::string e = "Unrelated words here.";
    for (int i = 0; i < matched; ++i) e += " [Fact " + std::to_string(i + 1) + "] " + f[static_cast<std::size_t>(i)].text + ".";
    const auto r = hallucination_risk(e, f);
    CHECK(r.matched_count == static_cast<std::size_t>(matched));
    CHECK(r.hr == 1.0 - matched / 4.0);
    CHECK(!r.ungroundable);
  }
  CHECK(hallucination_risk("zebra crossing", f).hr == 1.0);
  const auto empty = hallucination_risk("anything", {});
  CHECK(empty.hr == 0.0);
  CHECK(empty.ungroundable);
}

TEST_CASE("property: HR identity and monotonicity under appended fact sentences") {
  std::mt19937_64 rng(9);
  const auto f = facts4();
  for (int t = 0; t < 300; ++t) {
    std::string e = random_words(rng, 3 + static_cast<int>(rng() % 10)) + ".";
    for (int i = 0; i < 3; ++i) {
      if (rng() % 2) e += " " + random_words(rng, 2 + static_cast<int>(rng() % 5)) + ".";
    }
    const auto before = hallucination_risk(e, f);
    CHECK(before.hr == 1.0 - static_cast<double>(before.matched_count) / 4.0);
    const double g_before = groundedness(e, f);
    const auto extra = e + " " + f[rng() % f.size()].text + ".";
    CHECK(hallucination_risk(extra, f).hr <= before.hr);
    CHECK(groundedness(extra, f) >= g_before);
  }
}

TEST_CASE("groundedness") {
  const auto f = facts4();
  CHECK(groundedness(f[0].text + ". " + f[1].text + ".", f) == 1.0);
  CHECK(groundedness(f[0].text + ". Zebra crossing ahead.", f) == 0.5);
  CHECK(groundedness(f[0].text, {}) == 0.0);
  CHECK(groundedness("", f) == 0.0);
}

TEST_CASE("context relevance and srs against hand cosines") {
  const std::vector<FactDoc> docs = {{"a", "qt interval long", {}, ""}, {"b", "heart rate fast", {}, ""}};
  const auto index = build_index(docs);
  CHECK(std::abs(context_relevance("qt interval", "qt interval", index) - 1.0) <= 1e-9);
  CHECK(srs("zebra", docs, index) == 0.0);
  // All idf are equal (each term in exactly one doc), so vectors are count
  // vectors up to scale. explanation "qt fast" vs facts "qt interval long heart rate fast":
  // dot = 2, norms sqrt(2) and sqrt(6).
  CHECK(srs("qt fast", docs, index) == doctest::Approx(2.0 / (std::sqrt(2.0) * std::sqrt(6.0))).epsilon(1e-12));
}

TEST_CASE("causal retrieval coverage") {
  FactorContribution d;
  d.ranked = {{"qtc_bazett_ms", 0.5}, {"rr_rmssd_ms", 0.3}, {"heart_rate_bpm", 0.1}, {"qt_interval_ms", 0.05}};
  DescriptorMap m = {{"qtc_bazett_ms", {"corrected qt"}}, {"rr_rmssd_ms", {"rmssd"}}, {"heart_rate_bpm", {"heart rate"}}};
  CHECK(crc("Corrected QT. RMSSD. Heart rate.", d, m) == 1.0);
  CHECK(crc("Corrected QT is long. Zebra.", d, m) == doctest::Approx(1.0 / 3.0));
  CHECK(crc("qtc_bazett_ms is High.", d, m) == doctest::Approx(1.0 / 3.0));
  CHECK(crc("anything", FactorContribution{}, m) == 1.0);
  FactorContribution one;
  one.ranked = {{"rr_rmssd_ms", 0.3}};
  CHECK(crc("RMSSD.", one, m) == 1.0);
}

TEST_CASE("descriptor map parsing and report json") {
  const auto m = descriptor_map_from_json(nlohmann::json{{"qt_interval_ms", {"qt"}}});
  CHECK(m.at("qt_interval_ms") == std::vector<std::string>{"qt"});
  CHECK_THROWS(descriptor_map_from_json(nlohmann::json{{"x", 3}}));
  const auto j = to_json(hallucination_risk(facts4()[0].text, facts4()));
  CHECK(j.at("hr") == 0.75);
  CHECK(j.at("facts").size() == 4);
}
