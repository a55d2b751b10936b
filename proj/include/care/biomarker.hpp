#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "care/factors.hpp"
#include "care/record.hpp"

namespace care {

/// Quantile bin edges per factor. Immutable once fitted.
struct DiscretizerModel {
  int num_bins = 3;
  std::vector<std::string> factors;  // schema order
  std::map<std::string, std::vector<double>> cut_points;
  std::vector<std::string> bin_labels;
  std::set<std::string> degenerate;  // constant factors: one bin, excluded from the graph

  const std::string& label(int bin) const { return bin_labels.at(static_cast<std::size_t>(bin - 1)); }
};

/// Discretized evidence; bins are 1-based.
struct DiscreteEvidence {
  std::string record_id;
  std::map<std::string, int> bins;
  std::map<std::string, std::string> labels;
};

struct BiomarkerDelta {
  std::string baseline_record_id;
  std::string current_record_id;
  std::map<std::string, double> deltas;
};

std::vector<std::string> default_bin_labels(int k);

// --- waveform encoding ----------------------------------------------------

/// R-peak indices: 5-point derivative, squaring, 150 ms moving average,
/// threshold at half the trailing 2 s maximum, apex search within +-50 ms.
std::vector<std::size_t> detect_r_peaks(const EcgRecord& rec, const std::string& lead);

/// Lead used for measurements: "II" when present, else the first lead.
std::string measurement_lead(const EcgRecord& rec);

/// Deterministic 8-factor extraction. Throws EncodeFailure when no rhythm
/// can be established; individual unmeasurable factors are flagged instead.
BiomarkerVector extract_biomarkers(const EcgRecord& rec);

/// Pluggable record -> factor vector mapping.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual BiomarkerVector encode(const EcgRecord& rec) const = 0;
  virtual std::string name() const = 0;
};

/// Waveform feature extractor. Encode failures yield an all-missing vector.
class WaveformEncoder : public Encoder {
 public:
  explicit WaveformEncoder(std::vector<std::string> schema = default_factor_schema());
  BiomarkerVector encode(const EcgRecord& rec) const override;
  std::string name() const override { return "waveform-features-v1"; }

 private:
  std::vector<std::string> schema_;
};

/// Looks vectors up from a precomputed feature table by record id.
class FeatureTableEncoder : public Encoder {
 public:
  FeatureTableEncoder(const std::vector<BiomarkerVector>& table, std::vector<std::string> schema);
  BiomarkerVector encode(const EcgRecord& rec) const override;
  std::string name() const override { return "feature-table"; }

 private:
  std::map<std::string, BiomarkerVector> table_;
  std::vector<std::string> schema_;
};

// --- discretization ---------------------------------------------------------

/// Cut points at the j/K empirical quantiles (linear interpolation on the
/// sorted `ok` values). Constant factors become degenerate.
DiscretizerModel fit_discretizer(const std::vector<BiomarkerVector>& vectors, int k,
                                 const std::vector<std::string>& schema = default_factor_schema());

/// bin = 1 + #(cut points strictly below the value); missing factors omitted.
DiscreteEvidence discretize(const DiscretizerModel& model, const BiomarkerVector& v);

/// current - baseline over factors `ok` on both sides.
BiomarkerDelta delta(const BiomarkerVector& baseline, const BiomarkerVector& current);

// --- JSON -----------------------------------------------------------------

nlohmann::json to_json(const BiomarkerVector& v);
BiomarkerVector biomarkers_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscretizerModel& m);
DiscretizerModel discretizer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscreteEvidence& e);
DiscreteEvidence evidence_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BiomarkerDelta& d);

}  // namespace care
