#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "care/biomarker.hpp"
#include "care/causal_net.hpp"
#include "care/record.hpp"

namespace care {

/// Value ranges for one factor, one [lo, hi] interval per bin. The QTc factor
/// is derived from QT and heart rate instead and is binned by `cut_points`.
struct FactorRanges {
  std::string name;
  std::vector<std::pair<double, double>> bins;
  bool derived = false;
  std::vector<double> cut_points;
};

struct WaveformTemplate {
  double r_amplitude_mv = 2.0;
  double p_amplitude_mv = 0.15;
  double p_half_width_ms = 25.0;
  double st_ramp_ms = 20.0;
  double t_rise_ms = 60.0;
  double t_fall_ms = 100.0;
  double first_r_ms = 600.0;
  double beat_jitter_ms = 0.0;  // uniform +/- per RR interval
  double noise_mv = 0.0;        // uniform +/- per sample
  std::vector<std::pair<std::string, double>> leads{{"I", 0.7}, {"II", 1.0}};
};

struct SyntheticSpec {
  CausalNetwork network;  // ground truth over the factor schema and the outcome
  std::string outcome = "outcome";
  std::vector<FactorRanges> factors;
  WaveformTemplate waveform;
  double sampling_rate_hz = 500.0;
  double duration_s = 10.0;
  std::uint64_t seed = 42;

  const FactorRanges& ranges(const std::string& factor) const;
  /// Throws SpecInvalid when ranges overlap, CPTs are invalid, or the template
  /// cannot place every fiducial for the declared ranges.
  void validate() const;
};

/// Three-bin default: qt -> qtc <- heart rate, qtc -> outcome <- rr_rmssd,
/// remaining factors independent. The QTc CPT and reference cut points are
/// computed by quadrature over the uniform value ranges.
SyntheticSpec default_synthetic_spec();

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticCase {
  EcgRecord record;
  DiscreteEvidence evidence;  // ground-truth bins
  std::string outcome;        // ground-truth outcome state
  BiomarkerVector truth;      // ground-truth continuous values
};

/// Deterministic per (spec, seed).
SyntheticCase sample_case(const SyntheticSpec& spec, std::uint64_t seed);

/// Bins and outcomes only (no waveform), drawn the same way as sample_case.
LabeledEvidenceSet sample_evidence(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed);

/// Exact marginal of every node of the ground-truth network, by enumeration.
std::map<std::string, std::vector<double>> ground_truth_marginals(const SyntheticSpec& spec);

/// Per-case seeds derived from the dataset seed.
std::vector<std::uint64_t> case_seeds(std::uint64_t seed, std::size_t n);

struct DatasetEntry {
  std::string record_id;
  DiscreteEvidence evidence;
  std::string outcome;
  BiomarkerVector truth;
};

/// Writes <out>/store (record store) and <out>/manifest.jsonl.
std::vector<DatasetEntry> generate_dataset(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed,
                                           const std::filesystem::path& out);

nlohmann::json to_json(const DatasetEntry& e);
DatasetEntry dataset_entry_from_json(const nlohmann::json& j);

}  // namespace care
