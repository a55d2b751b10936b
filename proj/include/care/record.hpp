#pragma once

#include <optional>
#include <string>
#include <vector>

namespace care {

/// Multi-lead ECG segment. samples[c][t] is lead c at sample t, in millivolts.
struct EcgRecord {
  std::string record_id;
  std::optional<std::string> patient_id;
  std::optional<double> acquired_at;  // seconds since epoch
  double sampling_rate_hz = 0.0;
  std::vector<std::string> lead_names;
  std::vector<std::vector<double>> samples;

  std::size_t num_leads() const { return samples.size(); }
  std::size_t num_samples() const { return samples.empty() ? 0 : samples.front().size(); }

  /// Index of the named lead, or nullopt.
  std::optional<std::size_t> lead_index(const std::string& name) const;

  /// Throws BadRate / TooShort / InvalidArgument when an invariant is broken.
  void validate() const;
};

bool operator==(const EcgRecord& a, const EcgRecord& b);

}  // namespace care
