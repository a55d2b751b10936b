#include "care/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "care/error.hpp"
#include "care/signal_io.hpp"

namespace care {

using json = nlohmann::json;

namespace {

constexpr const char* kQtc = "qtc_bazett_ms";
constexpr const char* kQt = "qt_interval_ms";
constexpr const char* kHr = "heart_rate_bpm";
constexpr const char* kRmssd = "rr_rmssd_ms";
constexpr const char* kPr = "pr_interval_ms";
constexpr const char* kQrs = "qrs_duration_ms";
constexpr const char* kSt = "st_deviation_mv";
constexpr const char* kTa = "t_amplitude_mv";

// Fraction of the falling half-cosine after which it is within 5% of zero.
double t_end_fraction() { return std::acos(-0.9) / std::numbers::pi; }
// Distance from a raised-cosine centre to its 10% point, as a fraction of the half width.
double p_onset_fraction() { return std::acos(-0.8) / std::numbers::pi; }

double qtc_of(double qt, double hr) { return qt * std::sqrt(hr / 60.0); }

int bin_of(double value, const std::vector<double>& cuts) {
  int b = 1;
  for (double c : cuts) b += c < value ? 1 : 0;
  return b;
}

std::size_t row_index(const CausalNetwork& net, const std::string& node, const std::map<std::string, int>& states) {
  std::size_t config = 0;
  for (const auto& p : net.cpts.at(node).parents) {
    config = config * static_cast<std::size_t>(net.node(p).cardinality()) + static_cast<std::size_t>(states.at(p));
  }
  return config;
}

int draw(const std::vector<double>& row, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(row.size()) - 1;
}

std::pair<double, double> span(const FactorRanges& f) {
  return {f.bins.front().first, f.bins.back().second};
}

void invalid(const std::string& what) { throw Error(ErrorCode::SpecInvalid, what); }

// Per-beat geometry, all times in ms relative to the R peak.
struct Beat {
  double r_amp, qrs_half_base, st, t_amp, t_start, t_peak, t_rise, t_fall, st_ramp;
  double p_centre, p_half, p_amp;

  double operator()(double u) const {
    double v = 0.0;
    if (std::abs(u) < qrs_half_base) v += r_amp * (1.0 - std::abs(u) / qrs_half_base);
    if (std::abs(u - p_centre) < p_half) v += p_amp * 0.5 * (1.0 + std::cos(std::numbers::pi * (u - p_centre) / p_half));
    if (u >= qrs_half_base && u < t_start) {
      v += u < qrs_half_base + st_ramp ? st * (u - qrs_half_base) / st_ramp : st;
    } else if (u >= t_start && u < t_peak) {
      v += st + (t_amp - st) * 0.5 * (1.0 - std::cos(std::numbers::pi * (u - t_start) / t_rise));
    } else if (u >= t_peak && u < t_peak + t_fall) {
      v += t_amp * 0.5 * (1.0 + std::cos(std::numbers::pi * (u - t_peak) / t_fall));
    }
    return v;
  }

  double extent_after() const { return t_peak + t_fall; }
};

Beat make_beat(const WaveformTemplate& w, const std::map<std::string, double>& v) {
  Beat b{};
  const double qrs = v.at(kQrs);
  b.r_amp = w.r_amplitude_mv;
  // The 10%-amplitude points of the triangle sit exactly `qrs` apart.
  b.qrs_half_base = qrs / 1.8;
  b.st = v.at(kSt);
  b.st_ramp = w.st_ramp_ms;
  b.t_amp = v.at(kTa);
  b.t_rise = w.t_rise_ms;
  b.t_fall = w.t_fall_ms;
  b.t_peak = -qrs / 2.0 + v.at(kQt) - t_end_fraction() * w.t_fall_ms;
  b.t_start = b.t_peak - w.t_rise_ms;
  b.p_half = w.p_half_width_ms;
  b.p_amp = w.p_amplitude_mv;
  b.p_centre = -qrs / 2.0 - v.at(kPr) + p_onset_fraction() * w.p_half_width_ms;
  return b;
}

struct Draw {
  std::map<std::string, int> states;  // 0-based
  std::map<std::string, double> values;
};

Draw draw_case(const SyntheticSpec& spec, std::mt19937_64& rng) {
  Draw d;
  for (const auto& name : spec.network.topological_order()) {
    const auto& cpt = spec.network.cpts.at(name);
    if (name == spec.outcome) {
      d.states[name] = draw(cpt.rows[row_index(spec.network, name, d.states)], rng);
      continue;
    }
    const auto& r = spec.ranges(name);
    if (r.derived) {
      const double value = qtc_of(d.values.at(kQt), d.values.at(kHr));
      d.values[name] = value;
      d.states[name] = bin_of(value, r.cut_points) - 1;
      continue;
    }
    const int s = draw(cpt.rows[row_index(spec.network, name, d.states)], rng);
    const auto [lo, hi] = r.bins[static_cast<std::size_t>(s)];
    d.states[name] = s;
    d.values[name] = lo + (hi - lo) * uniform01(rng);
  }
  return d;
}

}  // namespace

const FactorRanges& SyntheticSpec::ranges(const std::string& factor) const {
  for (const auto& f : factors) {
    if (f.name == factor) return f;
  }
  throw Error(ErrorCode::SpecInvalid, "no value ranges for factor " + factor);
}

void SyntheticSpec::validate() const {
  try {
    network.validate();
  } catch (const Error& e) {
    invalid(std::string("ground-truth network: ") + e.what());
  }
  if (!network.has_node(outcome)) invalid("network lacks outcome node " + outcome);
  if (!(sampling_rate_hz >= 50.0 && sampling_rate_hz <= 2000.0)) invalid("sampling rate out of range");
  if (!(duration_s >= 2.0)) invalid("duration must be at least 2 s");
  for (const auto& name : default_factor_schema()) {
    if (!network.has_node(name)) invalid("network lacks factor " + name);
    const auto& r = ranges(name);
    const auto card = static_cast<std::size_t>(network.node(name).cardinality());
    if (r.derived) {
      if (name != kQtc) invalid("only " + std::string(kQtc) + " can be derived");
      if (r.cut_points.size() + 1 != card) invalid("cut point count does not match states of " + name);
      if (!std::is_sorted(r.cut_points.begin(), r.cut_points.end())) invalid("cut points of " + name + " unsorted");
      const auto parents = network.parents_of(name);
      for (const char* in : {kQt, kHr}) {
        if (std::find(parents.begin(), parents.end(), in) == parents.end()) {
          invalid(name + " must have " + in + " as a parent");
        }
      }
      continue;
    }
    if (r.bins.size() != card) invalid("bin count does not match states of " + name);
    for (std::size_t i = 0; i < r.bins.size(); ++i) {
      if (!(r.bins[i].first < r.bins[i].second)) invalid("empty range in " + name);
      if (i > 0 && !(r.bins[i - 1].second < r.bins[i].first)) invalid("ranges of " + name + " overlap or are unordered");
    }
  }
  for (const auto& f : factors) {
    if (!network.has_node(f.name)) invalid("ranges given for unknown factor " + f.name);
  }

  // Geometry: every fiducial the extractor looks for must be unambiguous.
  const auto& w = waveform;
  const auto [w_lo, w_hi] = span(ranges(kQrs));
  const auto [qt_lo, qt_hi] = span(ranges(kQt));
  const auto [pr_lo, pr_hi] = span(ranges(kPr));
  const auto [hr_lo, hr_hi] = span(ranges(kHr));
  const auto [rm_lo, rm_hi] = span(ranges(kRmssd));
  const auto [st_lo, st_hi] = span(ranges(kSt));
  if (!(hr_lo > 0.0) || rm_lo < 0.0 || !(w_lo > 0.0)) invalid("heart rate, RMSSD and QRS width must be positive");
  if (w.r_amplitude_mv <= 0.0 || w.p_half_width_ms <= 0.0 || w.t_rise_ms <= 0.0 || w.t_fall_ms <= 0.0 ||
      w.st_ramp_ms <= 0.0 || w.beat_jitter_ms < 0.0 || w.noise_mv < 0.0) {
    invalid("waveform template parameters must be positive");
  }
  if (w.leads.empty()) invalid("waveform template needs at least one lead");
  const double slack = 4000.0 / sampling_rate_hz;  // two samples
  const double p_reach = p_onset_fraction() * w.p_half_width_ms + w.p_half_width_ms;
  const double t_tail = t_end_fraction() * w.t_fall_ms;
  if (w_hi / 1.8 > 80.0 - slack) invalid("QRS too wide for the pre-R baseline window");
  if (pr_lo < 60.0 + p_reach + slack) invalid("PR too short: P wave overlaps the PR baseline window");
  if (-w_lo / 2.0 - pr_lo + p_reach > -100.0 - slack) invalid("PR too short: P wave overlaps the pre-R baseline");
  if (-w_hi / 2.0 - pr_hi + p_onset_fraction() * w.p_half_width_ms < -300.0 + slack) invalid("PR too long for P search");
  const double t_start_min = -w_hi / 2.0 + qt_lo - t_tail - w.t_rise_ms;
  if (t_start_min < std::max(w_hi / 2.0 + 60.0, w_hi / 1.8 + w.st_ramp_ms) + slack) {
    invalid("QT too short: T wave starts before the ST measurement point");
  }
  const double t_peak_max = -w_lo / 2.0 + qt_hi - t_tail;
  if (t_peak_max > w_lo / 2.0 + 400.0 - slack) invalid("QT too long for the T search window");
  const double rr_min = 60000.0 / hr_hi - rm_hi / 2.0 - w.beat_jitter_ms;
  if (t_peak_max + w.t_fall_ms > rr_min - 300.0 - slack) invalid("heart rate too high: T wave reaches the next P search");
  double t_min_abs = std::numeric_limits<double>::infinity();
  for (const auto& [lo, hi] : ranges(kTa).bins) t_min_abs = std::min({t_min_abs, std::abs(lo), std::abs(hi)});
  if (t_min_abs <= std::max(std::abs(st_lo), std::abs(st_hi))) invalid("T amplitude must exceed the ST deviation");
  if (w.first_r_ms < 320.0) invalid("first R peak too early");
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec s;
  const std::vector<std::string> lmh{"Low", "Mid", "High"};
  s.factors = {
      {kHr, {{50, 56}, {60, 66}, {70, 76}}, false, {}},
      {kRmssd, {{10, 20}, {35, 45}, {60, 70}}, false, {}},
      {kPr, {{130, 150}, {160, 180}, {190, 210}}, false, {}},
      {kQrs, {{70, 85}, {90, 105}, {110, 125}}, false, {}},
      {kQt, {{340, 360}, {390, 410}, {440, 460}}, false, {}},
      {kQtc, {}, true, {}},
      {kSt, {{-0.20, -0.10}, {-0.03, 0.03}, {0.10, 0.20}}, false, {}},
      {kTa, {{0.25, 0.35}, {0.45, 0.55}, {0.65, 0.75}}, false, {}},
  };
  auto& net = s.network;
  for (const auto& name : default_factor_schema()) net.nodes.push_back({name, lmh});
  net.nodes.push_back({s.outcome, {"Normal", "Abnormal"}});
  net.edges = {{kHr, kQtc}, {kQt, kQtc}, {kRmssd, s.outcome}, {kQtc, s.outcome}};
  net.priors.ordering = {kHr, kRmssd, kPr, kQrs, kQt, kSt, kTa, kQtc, s.outcome};
  const std::vector<double> uniform(3, 1.0 / 3.0);
  for (const auto& name : default_factor_schema()) net.cpts[name] = Cpt{{}, {uniform}};

  // QTc: population tertiles and P(bin | hr bin, qt bin) by midpoint quadrature.
  constexpr int grid = 200;
  const auto& hr = s.factors[0].bins;
  const auto& qt = s.factors[4].bins;
  std::vector<std::pair<double, double>> population;  // value, weight
  std::vector<std::vector<double>> cell_values(9);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      auto& cell = cell_values[a * 3 + b];
      for (int i = 0; i < grid; ++i) {
        const double h = hr[a].first + (hr[a].second - hr[a].first) * (i + 0.5) / grid;
        for (int j = 0; j < grid; ++j) {
          const double q = qt[b].first + (qt[b].second - qt[b].first) * (j + 0.5) / grid;
          cell.push_back(qtc_of(q, h));
          population.emplace_back(cell.back(), uniform[a] * uniform[b]);
        }
      }
    }
  }
  std::sort(population.begin(), population.end());
  double total = 0.0;
  for (const auto& p : population) total += p.second;
  std::vector<double> cuts;
  double acc = 0.0;
  std::size_t next = 1;
  for (const auto& [value, weight] : population) {
    acc += weight;
    if (next < 3 && acc >= total * static_cast<double>(next) / 3.0) {
      cuts.push_back(value);
      ++next;
    }
  }
  s.factors[5].cut_points = cuts;
  Cpt qtc{{kHr, kQt}, {}};
  for (const auto& cell : cell_values) {
    std::vector<double> row(3, 0.0);
    for (double v : cell) row[static_cast<std::size_t>(bin_of(v, cuts) - 1)] += 1.0;
    for (auto& p : row) p /= static_cast<double>(cell.size());
    qtc.rows.push_back(row);
  }
  net.cpts[kQtc] = qtc;

  Cpt out{{kRmssd, kQtc}, {}};
  for (int rr = 0; rr < 3; ++rr) {
    for (int q = 0; q < 3; ++q) {
      const double abnormal = (rr == 2 || q == 2) ? 0.98 : 0.02;
      out.rows.push_back({1.0 - abnormal, abnormal});
    }
  }
  net.cpts[s.outcome] = out;
  s.validate();
  return s;
}

// --- JSON ------------------------------------------------------------------------

json to_json(const SyntheticSpec& s) {
  json factors = json::array();
  for (const auto& f : s.factors) {
    json bins = json::array();
    for (const auto& [lo, hi] : f.bins) bins.push_back(json::array({lo, hi}));
    factors.push_back(json{{"name", f.name}, {"bins", bins}, {"derived", f.derived}, {"cut_points", f.cut_points}});
  }
  json leads = json::array();
  for (const auto& [name, gain] : s.waveform.leads) leads.push_back(json{{"name", name}, {"gain", gain}});
  const auto& w = s.waveform;
  return json{{"outcome", s.outcome},
              {"sampling_rate_hz", s.sampling_rate_hz},
              {"duration_s", s.duration_s},
              {"seed", s.seed},
              {"factors", factors},
              {"waveform",
               {{"r_amplitude_mv", w.r_amplitude_mv},
                {"p_amplitude_mv", w.p_amplitude_mv},
                {"p_half_width_ms", w.p_half_width_ms},
                {"st_ramp_ms", w.st_ramp_ms},
                {"t_rise_ms", w.t_rise_ms},
                {"t_fall_ms", w.t_fall_ms},
                {"first_r_ms", w.first_r_ms},
                {"beat_jitter_ms", w.beat_jitter_ms},
                {"noise_mv", w.noise_mv},
                {"leads", leads}}},
              {"network", to_json(s.network)}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  try {
    s.outcome = j.value("outcome", s.outcome);
    s.sampling_rate_hz = j.value("sampling_rate_hz", s.sampling_rate_hz);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.seed = j.value("seed", s.seed);
    for (const auto& f : j.at("factors")) {
      FactorRanges r;
      r.name = f.at("name").get<std::string>();
      for (const auto& b : f.value("bins", json::array())) r.bins.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
      r.derived = f.value("derived", false);
      r.cut_points = f.value("cut_points", std::vector<double>{});
      s.factors.push_back(r);
    }
    if (j.contains("waveform")) {
      const auto& w = j.at("waveform");
      auto& t = s.waveform;
      t.r_amplitude_mv = w.value("r_amplitude_mv", t.r_amplitude_mv);
      t.p_amplitude_mv = w.value("p_amplitude_mv", t.p_amplitude_mv);
      t.p_half_width_ms = w.value("p_half_width_ms", t.p_half_width_ms);
      t.st_ramp_ms = w.value("st_ramp_ms", t.st_ramp_ms);
      t.t_rise_ms = w.value("t_rise_ms", t.t_rise_ms);
      t.t_fall_ms = w.value("t_fall_ms", t.t_fall_ms);
      t.first_r_ms = w.value("first_r_ms", t.first_r_ms);
      t.beat_jitter_ms = w.value("beat_jitter_ms", t.beat_jitter_ms);
      t.noise_mv = w.value("noise_mv", t.noise_mv);
      if (w.contains("leads")) {
        t.leads.clear();
        for (const auto& l : w.at("leads")) t.leads.emplace_back(l.at("name").get<std::string>(), l.at("gain").get<double>());
      }
    }
    s.network = network_from_json(j.at("network"));
  } catch (const json::exception& e) {
    invalid(std::string("malformed synthetic spec: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SpecInvalid) throw;
    invalid(e.what());
  }
  s.validate();
  return s;
}

// --- sampling --------------------------------------------------------------------

SyntheticCase sample_case(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const auto d = draw_case(spec, rng);

  SyntheticCase c;
  const std::string id = "syn-" + std::to_string(seed);
  c.outcome = spec.network.node(spec.outcome).states[static_cast<std::size_t>(d.states.at(spec.outcome))];
  c.evidence.record_id = id;
  c.truth.record_id = id;
  for (const auto& name : default_factor_schema()) {
    const int s = d.states.at(name);
    c.evidence.bins[name] = s + 1;
    c.evidence.labels[name] = spec.network.node(name).states[static_cast<std::size_t>(s)];
    c.truth.values[name] = d.values.at(name);
    c.truth.quality[name] = Quality::ok;
  }

  const double fs = spec.sampling_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * fs));
  const double duration_ms = spec.duration_s * 1000.0;
  const auto beat = make_beat(spec.waveform, d.values);
  const double rr0 = 60000.0 / d.values.at(kHr);
  const double half_swing = d.values.at(kRmssd) / 2.0;
  const double jitter = spec.waveform.beat_jitter_ms;

  std::vector<long long> r_samples;
  double t = spec.waveform.first_r_ms;
  for (int i = 0; t + beat.extent_after() + 20.0 <= duration_ms; ++i) {
    r_samples.push_back(std::llround(t * fs / 1000.0));
    double rr = rr0 + (i % 2 == 0 ? half_swing : -half_swing);
    if (jitter > 0.0) rr += jitter * (2.0 * uniform01(rng) - 1.0);
    t += rr;
  }

  std::vector<double> base(n, 0.0);
  const auto before = static_cast<long long>(std::ceil(400.0 * fs / 1000.0));
  const auto after = static_cast<long long>(std::ceil((beat.extent_after() + 10.0) * fs / 1000.0));
  for (long long r : r_samples) {
    for (long long k = std::max(0LL, r - before); k <= std::min(static_cast<long long>(n) - 1, r + after); ++k) {
      base[static_cast<std::size_t>(k)] += beat(static_cast<double>(k - r) * 1000.0 / fs);
    }
  }

  auto& rec = c.record;
  rec.record_id = id;
  rec.sampling_rate_hz = fs;
  for (const auto& [name, gain] : spec.waveform.leads) {
    rec.lead_names.push_back(name);
    std::vector<double> lead(n);
    for (std::size_t k = 0; k < n; ++k) {
      lead[k] = gain * base[k];
      if (spec.waveform.noise_mv > 0.0) lead[k] += spec.waveform.noise_mv * (2.0 * uniform01(rng) - 1.0);
    }
    rec.samples.push_back(std::move(lead));
  }
  return c;
}

std::vector<std::uint64_t> case_seeds(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 master(seed);
  std::vector<std::uint64_t> out(n);
  for (auto& s : out) s = master();
  return out;
}

LabeledEvidenceSet sample_evidence(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  LabeledEvidenceSet data;
  data.outcome = spec.outcome;
  for (const auto& name : default_factor_schema()) data.schema.push_back(spec.network.node(name));
  data.schema.push_back(spec.network.node(spec.outcome));
  const auto seeds = case_seeds(seed, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(seeds[i]);
    const auto d = draw_case(spec, rng);
    DiscreteEvidence e;
    e.record_id = "syn-" + std::to_string(seeds[i]);
    for (const auto& name : default_factor_schema()) {
      const int s = d.states.at(name);
      e.bins[name] = s + 1;
      e.labels[name] = spec.network.node(name).states[static_cast<std::size_t>(s)];
    }
    const auto& outcome_states = spec.network.node(spec.outcome).states;
    data.rows.emplace_back(e, outcome_states[static_cast<std::size_t>(d.states.at(spec.outcome))]);
  }
  return data;
}

std::map<std::string, std::vector<double>> ground_truth_marginals(const SyntheticSpec& spec) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& node : spec.network.nodes) {
    out[node.name] = infer_posterior(spec.network, StateAssignment{}, node.name).probs;
  }
  return out;
}

// --- dataset ---------------------------------------------------------------------

json to_json(const DatasetEntry& e) {
  return json{{"record_id", e.record_id},
              {"query", "What is the most likely outcome for this ECG?"},
              {"gold_answer", e.outcome},
              {"gold_outcome", e.outcome},
              {"gold_evidence", to_json(e.evidence)},
              {"truth", to_json(e.truth)}};
}

DatasetEntry dataset_entry_from_json(const json& j) {
  DatasetEntry e;
  e.record_id = j.at("record_id").get<std::string>();
  e.outcome = j.at("gold_outcome").get<std::string>();
  e.evidence = evidence_from_json(j.at("gold_evidence"));
  if (j.contains("truth")) e.truth = biomarkers_from_json(j.at("truth"));
  return e;
}

std::vector<DatasetEntry> generate_dataset(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed,
                                           const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out.string() + ": " + ec.message());
  RecordStore store(out / "store");
  std::vector<DatasetEntry> entries;
  const auto seeds = case_seeds(seed, n);
  std::string manifest;
  for (std::size_t i = 0; i < n; ++i) {
    auto c = sample_case(spec, seeds[i]);
    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", i);
    c.record.record_id = c.evidence.record_id = c.truth.record_id = id;
    store.store(c.record);
    DatasetEntry e{id, c.evidence, c.outcome, c.truth};
    manifest += to_json(e).dump() + "\n";
    entries.push_back(std::move(e));
  }
  const auto path = out / "manifest.jsonl";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << manifest;
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + path.string());
  return entries;
}

}  // namespace care
