#include "care/biomarker.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "care/error.hpp"

namespace care {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// factor vectors

std::string_view to_string(Quality q) {
  switch (q) {
    case Quality::ok: return "ok";
    case Quality::low_confidence: return "low_confidence";
    case Quality::missing: return "missing";
  }
  return "missing";
}

Quality quality_from_string(std::string_view s) {
  if (s == "ok") return Quality::ok;
  if (s == "low_confidence") return Quality::low_confidence;
  if (s == "missing") return Quality::missing;
  throw Error(ErrorCode::InvalidArgument, "unknown quality '" + std::string(s) + "'");
}

std::optional<double> BiomarkerVector::get(const std::string& factor) const {
  auto q = quality.find(factor);
  if (q == quality.end() || q->second == Quality::missing) return std::nullopt;
  auto v = values.find(factor);
  if (v == values.end()) return std::nullopt;
  return v->second;
}

bool BiomarkerVector::usable(const std::string& factor) const { return get(factor).has_value(); }

const std::vector<std::string>& default_factor_schema() {
  static const std::vector<std::string> schema = {
      "heart_rate_bpm",  "rr_rmssd_ms",   "pr_interval_ms",  "qrs_duration_ms",
      "qt_interval_ms",  "qtc_bazett_ms", "st_deviation_mv", "t_amplitude_mv"};
  return schema;
}

BiomarkerVector conform_to_schema(BiomarkerVector v, const std::vector<std::string>& schema) {
  std::set<std::string> known(schema.begin(), schema.end());
  for (const auto& [name, q] : v.quality) {
    if (!known.count(name)) throw Error(ErrorCode::SchemaMismatch, "factor '" + name + "' not in schema");
  }
  for (const auto& name : schema) {
    if (!v.quality.count(name)) {
      v.quality[name] = Quality::missing;
      v.values.erase(name);
    }
    if (v.quality[name] == Quality::missing) v.values.erase(name);
  }
  return v;
}

std::vector<std::string> default_bin_labels(int k) {
  if (k == 2) return {"Low", "High"};
  if (k == 3) return {"Low", "Mid", "High"};
  std::vector<std::string> out;
  for (int i = 1; i <= k; ++i) out.push_back("Q" + std::to_string(i));
  return out;
}

// ---------------------------------------------------------------------------
// R-peak detection

namespace {

std::size_t ms_to_samples(double ms, double fs) {
  return static_cast<std::size_t>(std::lround(ms * fs / 1000.0));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<std::size_t> detect_r_peaks(const EcgRecord& rec, const std::string& lead) {
  auto li = rec.lead_index(lead);
  if (!li) throw Error(ErrorCode::LeadNotFound, "lead '" + lead + "'");
  const auto& x = rec.samples[*li];
  const double fs = rec.sampling_rate_hz;
  const std::size_t n = x.size();
  if (static_cast<double>(n) < 2.0 * fs) throw Error(ErrorCode::TooShort, "signal shorter than 2 s");

  // Derivative is causal with a 2-sample group delay; store it centred.
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 4; i < n; ++i) {
    double d = (2.0 * x[i] + x[i - 1] - x[i - 3] - 2.0 * x[i - 4]) / 8.0;
    sq[i - 2] = d * d;
  }

  // Centred 150 ms moving average (2h+1 samples, truncated at the edges).
  const std::size_t h = ms_to_samples(75.0, fs);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sq[i];
  std::vector<double> integ(n, 0.0);
  const double width = static_cast<double>(2 * h + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i >= h ? i - h : 0;
    std::size_t hi = std::min(n, i + h + 1);
    integ[i] = (prefix[hi] - prefix[lo]) / width;
  }

  const double peak_integ = *std::max_element(integ.begin(), integ.end());
  if (!(peak_integ > 0.0)) throw Error(ErrorCode::NoPeaks, "flat signal on lead " + lead);

  // Threshold: half the maximum over the trailing 2 s; the first 2 s use the
  // maximum of the initial 2 s learning window.
  const std::size_t win = ms_to_samples(2000.0, fs);
  const double learn_max =
      *std::max_element(integ.begin(), integ.begin() + static_cast<std::ptrdiff_t>(std::min(n, win + 1)));
  std::vector<double> thr(n);
  std::deque<std::size_t> dq;
  for (std::size_t i = 0; i < n; ++i) {
    while (!dq.empty() && integ[dq.back()] <= integ[i]) dq.pop_back();
    dq.push_back(i);
    while (dq.front() + win < i) dq.pop_front();
    thr[i] = 0.5 * (i < win ? learn_max : integ[dq.front()]);
  }

  // Each above-threshold run contributes one candidate, anchored at its centre.
  const std::size_t search = ms_to_samples(50.0, fs);
  const std::size_t refractory = ms_to_samples(200.0, fs);
  std::vector<std::size_t> peaks;
  std::size_t i = 0;
  while (i < n) {
    if (!(integ[i] > thr[i] && thr[i] > 0.0)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < n && integ[i] > thr[i]) ++i;
    std::size_t anchor = (start + i - 1) / 2;
    std::size_t lo = anchor >= search ? anchor - search : 0;
    std::size_t hi = std::min(n - 1, anchor + search);
    std::size_t best = lo;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (x[k] > x[best]) best = k;
    }
    if (!peaks.empty() && best <= peaks.back()) continue;
    if (!peaks.empty() && best - peaks.back() < refractory) {
      if (x[best] > x[peaks.back()]) peaks.back() = best;
      continue;
    }
    peaks.push_back(best);
  }
  if (peaks.size() < 2) {
    throw Error(ErrorCode::NoPeaks, std::to_string(peaks.size()) + " peak(s) on lead " + lead);
  }
  return peaks;
}

std::string measurement_lead(const EcgRecord& rec) {
  if (rec.lead_index("II")) return "II";
  if (rec.lead_names.empty()) throw Error(ErrorCode::LeadNotFound, "record has no leads");
  return rec.lead_names.front();
}

// ---------------------------------------------------------------------------
// fiducials

namespace {

struct BeatMeasures {
  std::optional<double> pr, qrs, qt, st, t_amp;
};

// Fiducial rules per beat; every failed search leaves the field empty.
BeatMeasures measure_beat(const std::vector<double>& x, double fs, std::size_t r,
                          std::optional<std::size_t> next_r) {
  BeatMeasures m;
  const auto n = x.size();
  auto S = [&](double ms) { return static_cast<std::ptrdiff_t>(std::lround(ms * fs / 1000.0)); };
  const auto ri = static_cast<std::ptrdiff_t>(r);
  auto in_range = [&](std::ptrdiff_t k) { return k >= 0 && k < static_cast<std::ptrdiff_t>(n); };
  auto at = [&](std::ptrdiff_t k) { return x[static_cast<std::size_t>(k)]; };

  if (!in_range(ri - S(100))) return m;
  std::vector<double> pre;
  for (auto k = ri - S(100); k <= ri - S(80); ++k) pre.push_back(at(k));
  const double local = median(pre);
  const double amp = at(ri) - local;
  if (!(amp > 0.0)) return m;

  std::optional<std::ptrdiff_t> onset, offset;
  for (auto k = ri - 1; k >= ri - S(80) && k >= 0; --k) {
    if (std::abs(at(k) - local) < 0.1 * amp) {
      onset = k;
      break;
    }
  }
  for (auto k = ri + 1; k <= ri + S(100) && in_range(k); ++k) {
    if (std::abs(at(k) - local) < 0.1 * amp) {
      offset = k;
      break;
    }
  }
  if (onset && offset) m.qrs = static_cast<double>(*offset - *onset) * 1000.0 / fs;
  if (!onset) return m;

  // PR-segment baseline: mean over 40 ms ending 20 ms before QRS onset.
  const auto b_lo = *onset - S(60), b_hi = *onset - S(20);
  if (!in_range(b_lo)) return m;
  double base = 0.0;
  for (auto k = b_lo; k < b_hi; ++k) base += at(k);
  base /= static_cast<double>(b_hi - b_lo);

  // P wave: peak in (R - 300, R - 80) ms, onset by the 10% rule.
  if (in_range(ri - S(300))) {
    std::ptrdiff_t p = ri - S(300) + 1;
    for (auto k = p; k < ri - S(80); ++k) {
      if (std::abs(at(k) - base) > std::abs(at(p) - base)) p = k;
    }
    const double p_amp = std::abs(at(p) - base);
    if (p_amp > 0.0) {
      for (auto k = p - 1; k >= p - S(150) && k >= 0; --k) {
        if (std::abs(at(k) - base) < 0.1 * p_amp) {
          m.pr = static_cast<double>(*onset - k) * 1000.0 / fs;
          break;
        }
      }
    }
  }

  if (!offset) return m;
  const auto st_at = *offset + S(60);
  if (in_range(st_at)) m.st = at(st_at) - base;

  auto t_lo = *offset + S(80) + 1;
  auto t_hi = *offset + S(400);
  if (next_r) t_hi = std::min(t_hi, static_cast<std::ptrdiff_t>(*next_r) - S(150));
  t_hi = std::min(t_hi, static_cast<std::ptrdiff_t>(n) - 1);
  if (t_lo >= t_hi) return m;
  std::ptrdiff_t tp = t_lo;
  for (auto k = t_lo; k < t_hi; ++k) {
    if (std::abs(at(k) - base) > std::abs(at(tp) - base)) tp = k;
  }
  const double t_amp = at(tp) - base;
  if (t_amp == 0.0) return m;
  m.t_amp = t_amp;
  for (auto k = tp + 1; k <= tp + S(300) && in_range(k); ++k) {
    if (std::abs(at(k) - base) <= 0.05 * std::abs(t_amp)) {
      m.qt = static_cast<double>(k - *onset) * 1000.0 / fs;
      break;
    }
  }
  return m;
}

void summarize(BiomarkerVector& v, const std::string& name, const std::vector<double>& vals,
               std::size_t beats) {
  if (vals.empty()) {
    v.quality[name] = Quality::missing;
    return;
  }
  v.values[name] = median(vals);
  v.quality[name] = (vals.size() >= 2 && 2 * vals.size() >= beats) ? Quality::ok : Quality::low_confidence;
}

}  // namespace

BiomarkerVector extract_biomarkers(const EcgRecord& rec) {
  const auto lead = measurement_lead(rec);
  std::vector<std::size_t> peaks;
  try {
    peaks = detect_r_peaks(rec, lead);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoPeaks) throw Error(ErrorCode::EncodeFailure, e.detail());
    throw;
  }
  const double fs = rec.sampling_rate_hz;
  const auto& x = rec.samples[*rec.lead_index(lead)];

  BiomarkerVector v;
  v.record_id = rec.record_id;

  std::vector<double> rr;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    rr.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) * 1000.0 / fs);
  }
  const double mean_rr = std::accumulate(rr.begin(), rr.end(), 0.0) / static_cast<double>(rr.size());
  v.values["heart_rate_bpm"] = 60000.0 / mean_rr;
  v.quality["heart_rate_bpm"] = rr.size() >= 2 ? Quality::ok : Quality::low_confidence;
  if (rr.size() >= 2) {
    double ss = 0.0;
    for (std::size_t i = 1; i < rr.size(); ++i) ss += (rr[i] - rr[i - 1]) * (rr[i] - rr[i - 1]);
    v.values["rr_rmssd_ms"] = std::sqrt(ss / static_cast<double>(rr.size() - 1));
    v.quality["rr_rmssd_ms"] = rr.size() >= 3 ? Quality::ok : Quality::low_confidence;
  } else {
    v.quality["rr_rmssd_ms"] = Quality::missing;
  }

  std::vector<double> pr, qrs, qt, st, ta;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    std::optional<std::size_t> next;
    if (i + 1 < peaks.size()) next = peaks[i + 1];
    auto m = measure_beat(x, fs, peaks[i], next);
    if (m.pr) pr.push_back(*m.pr);
    if (m.qrs) qrs.push_back(*m.qrs);
    if (m.qt) qt.push_back(*m.qt);
    if (m.st) st.push_back(*m.st);
    if (m.t_amp) ta.push_back(*m.t_amp);
  }
  const auto beats = peaks.size();
  summarize(v, "pr_interval_ms", pr, beats);
  summarize(v, "qrs_duration_ms", qrs, beats);
  summarize(v, "qt_interval_ms", qt, beats);
  summarize(v, "st_deviation_mv", st, beats);
  summarize(v, "t_amplitude_mv", ta, beats);

  if (auto q = v.get("qt_interval_ms")) {
    v.values["qtc_bazett_ms"] = *q / std::sqrt(mean_rr / 1000.0);
    v.quality["qtc_bazett_ms"] = v.quality["qt_interval_ms"];
  } else {
    v.quality["qtc_bazett_ms"] = Quality::missing;
  }
  return v;
}

WaveformEncoder::WaveformEncoder(std::vector<std::string> schema) : schema_(std::move(schema)) {}

BiomarkerVector WaveformEncoder::encode(const EcgRecord& rec) const {
  BiomarkerVector v;
  try {
    v = extract_biomarkers(rec);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EncodeFailure) throw;
    v = BiomarkerVector{};
    v.record_id = rec.record_id;
    for (const auto& f : schema_) v.quality[f] = Quality::missing;
    return v;
  }
  BiomarkerVector out;
  out.record_id = v.record_id;
  for (const auto& f : schema_) {
    auto q = v.quality.find(f);
    out.quality[f] = q == v.quality.end() ? Quality::missing : q->second;
    if (auto val = v.get(f)) out.values[f] = *val;
  }
  return out;
}

FeatureTableEncoder::FeatureTableEncoder(const std::vector<BiomarkerVector>& table,
                                         std::vector<std::string> schema)
    : schema_(std::move(schema)) {
  for (const auto& v : table) table_[v.record_id] = conform_to_schema(v, schema_);
}

BiomarkerVector FeatureTableEncoder::encode(const EcgRecord& rec) const {
  auto it = table_.find(rec.record_id);
  if (it == table_.end()) throw Error(ErrorCode::NotFound, "no feature row for " + rec.record_id);
  return it->second;
}

// ---------------------------------------------------------------------------
// discretization

DiscretizerModel fit_discretizer(const std::vector<BiomarkerVector>& vectors, int k,
                                 const std::vector<std::string>& schema) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "K must be >= 2");
  DiscretizerModel m;
  m.num_bins = k;
  m.factors = schema;
  m.bin_labels = default_bin_labels(k);
  for (const auto& f : schema) {
    std::vector<double> vals;
    for (const auto& v : vectors) {
      auto q = v.quality.find(f);
      auto val = v.values.find(f);
      if (q != v.quality.end() && q->second == Quality::ok && val != v.values.end()) {
        vals.push_back(val->second);
      }
    }
    if (vals.size() < static_cast<std::size_t>(k)) {
      throw Error(ErrorCode::InsufficientData, "factor '" + f + "' has " + std::to_string(vals.size()) +
                                                   " ok values, need " + std::to_string(k));
    }
    std::sort(vals.begin(), vals.end());
    if (vals.front() == vals.back()) {
      m.degenerate.insert(f);
      m.cut_points[f] = {};
      continue;
    }
    std::vector<double> cuts;
    const double last = static_cast<double>(vals.size() - 1);
    for (int j = 1; j < k; ++j) {
      const double pos = last * static_cast<double>(j) / static_cast<double>(k);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, vals.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      const double q = vals[lo] + frac * (vals[hi] - vals[lo]);
      // Tied quantiles collapse so the edges stay strictly increasing.
      if (cuts.empty() || q > cuts.back()) cuts.push_back(q);
    }
    m.cut_points[f] = cuts;
  }
  return m;
}

DiscreteEvidence discretize(const DiscretizerModel& model, const BiomarkerVector& v) {
  std::set<std::string> known(model.factors.begin(), model.factors.end());
  for (const auto& [name, q] : v.quality) {
    if (!known.count(name)) throw Error(ErrorCode::SchemaMismatch, "factor '" + name + "' unknown to model");
  }
  DiscreteEvidence e;
  e.record_id = v.record_id;
  for (const auto& f : model.factors) {
    if (!v.quality.count(f)) throw Error(ErrorCode::SchemaMismatch, "vector lacks factor '" + f + "'");
    auto val = v.get(f);
    if (!val) continue;
    int bin = 1;
    if (!model.degenerate.count(f)) {
      for (double c : model.cut_points.at(f)) {
        if (c < *val) ++bin;
      }
    }
    e.bins[f] = bin;
    e.labels[f] = model.label(bin);
  }
  return e;
}

BiomarkerDelta delta(const BiomarkerVector& baseline, const BiomarkerVector& current) {
  auto keys = [](const BiomarkerVector& v) {
    std::set<std::string> s;
    for (const auto& [k, q] : v.quality) s.insert(k);
    for (const auto& [k, x] : v.values) s.insert(k);
    return s;
  };
  if (keys(baseline) != keys(current)) {
    throw Error(ErrorCode::SchemaMismatch, "delta between vectors with different factor sets");
  }
  BiomarkerDelta d;
  d.baseline_record_id = baseline.record_id;
  d.current_record_id = current.record_id;
  for (const auto& [f, q] : current.quality) {
    auto bq = baseline.quality.find(f);
    if (q != Quality::ok || bq == baseline.quality.end() || bq->second != Quality::ok) continue;
    d.deltas[f] = current.values.at(f) - baseline.values.at(f);
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const BiomarkerVector& v) {
  json values = json::object(), quality = json::object();
  for (const auto& [f, q] : v.quality) {
    quality[f] = std::string(to_string(q));
    auto it = v.values.find(f);
    values[f] = (q != Quality::missing && it != v.values.end()) ? json(it->second) : json(nullptr);
  }
  return json{{"record_id", v.record_id}, {"values", values}, {"quality", quality}};
}

BiomarkerVector biomarkers_from_json(const json& j) {
  BiomarkerVector v;
  v.record_id = j.at("record_id").get<std::string>();
  for (const auto& [f, q] : j.at("quality").items()) v.quality[f] = quality_from_string(q.get<std::string>());
  for (const auto& [f, x] : j.at("values").items()) {
    if (!x.is_null()) v.values[f] = x.get<double>();
  }
  return v;
}

json to_json(const DiscretizerModel& m) {
  json cuts = json::object();
  for (const auto& [f, c] : m.cut_points) cuts[f] = c;
  return json{{"num_bins", m.num_bins},
              {"factors", m.factors},
              {"bin_labels", m.bin_labels},
              {"cut_points", cuts},
              {"degenerate", std::vector<std::string>(m.degenerate.begin(), m.degenerate.end())}};
}

DiscretizerModel discretizer_from_json(const json& j) {
  DiscretizerModel m;
  m.num_bins = j.at("num_bins").get<int>();
  m.factors = j.at("factors").get<std::vector<std::string>>();
  m.bin_labels = j.at("bin_labels").get<std::vector<std::string>>();
  for (const auto& [f, c] : j.at("cut_points").items()) m.cut_points[f] = c.get<std::vector<double>>();
  for (const auto& f : j.value("degenerate", json::array())) m.degenerate.insert(f.get<std::string>());
  if (m.num_bins < 2 || static_cast<int>(m.bin_labels.size()) != m.num_bins) {
    throw Error(ErrorCode::InvalidArgument, "discretizer labels do not match num_bins");
  }
  for (const auto& f : m.factors) {
    if (!m.cut_points.count(f)) throw Error(ErrorCode::InvalidArgument, "no cut points for " + f);
    const auto& c = m.cut_points.at(f);
    for (std::size_t i = 1; i < c.size(); ++i) {
      if (!(c[i] > c[i - 1])) throw Error(ErrorCode::InvalidArgument, "cut points not increasing for " + f);
    }
  }
  return m;
}

json to_json(const DiscreteEvidence& e) {
  json bins = json::object(), labels = json::object();
  for (const auto& [f, b] : e.bins) bins[f] = b;
  for (const auto& [f, l] : e.labels) labels[f] = l;
  return json{{"record_id", e.record_id}, {"bins", bins}, {"labels", labels}};
}

DiscreteEvidence evidence_from_json(const json& j) {
  DiscreteEvidence e;
  e.record_id = j.value("record_id", std::string{});
  for (const auto& [f, b] : j.at("bins").items()) e.bins[f] = b.get<int>();
  if (j.contains("labels")) {
    for (const auto& [f, l] : j.at("labels").items()) e.labels[f] = l.get<std::string>();
  }
  return e;
}

json to_json(const BiomarkerDelta& d) {
  json deltas = json::object();
  for (const auto& [f, x] : d.deltas) deltas[f] = x;
  return json{{"baseline_record_id", d.baseline_record_id},
              {"current_record_id", d.current_record_id},
              {"deltas", deltas}};
}

}  // namespace care
