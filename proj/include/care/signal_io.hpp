#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "care/factors.hpp"
#include "care/record.hpp"

namespace care {

struct CsvReadOptions {
  double sampling_rate_hz = 500.0;
  std::vector<std::string> lead_names;  // empty: header row, else lead1..leadC
  std::optional<std::string> record_id;  // default: file stem
  double scale = 1.0;                    // multiplicative factor applied at ingest
};

/// One column per lead. A non-numeric first row is treated as a header.
EcgRecord read_csv_record(const std::filesystem::path& path, const CsvReadOptions& opts);

/// Parses CSV content already in memory (used by uploads).
EcgRecord parse_csv_record(std::string_view content, const CsvReadOptions& opts,
                           const std::string& source_name);

/// WFDB header + format-16 signal file. Converts to mV as (raw - baseline) / gain.
EcgRecord read_wfdb16_record(const std::filesystem::path& header_path);

/// In-memory variant: header text plus the raw bytes of its signal file.
EcgRecord parse_wfdb16_record(std::string_view header_text, std::string_view signal_bytes);

/// First column record_id, remaining columns named factors. Empty cells are
/// flagged `missing`.
std::vector<BiomarkerVector> read_feature_csv(const std::filesystem::path& path);
std::vector<BiomarkerVector> parse_feature_csv(std::string_view content);

struct StoredRecordInfo {
  std::string record_id;
  std::optional<std::string> patient_id;
  std::optional<double> acquired_at;
  double sampling_rate_hz = 0.0;
  std::vector<std::string> lead_names;
  std::size_t num_samples = 0;
};

/// Directory-backed record store.
///
/// Layout: <root>/index.json plus <root>/records/<id>/{samples.f64,meta.json}.
/// Samples are little-endian IEEE doubles, lead-major, so loads are bit-exact.
/// Reads may run concurrently; writers must be serialized by the caller.
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Throws DuplicateRecordId if the id exists.
  std::string store(const EcgRecord& rec);
  EcgRecord load(const std::string& record_id) const;
  bool contains(const std::string& record_id) const;
  const StoredRecordInfo& info(const std::string& record_id) const;

  /// All ids in lexicographic order.
  std::vector<std::string> list_records() const;

  /// Timestamped records of one patient, ascending by acquired_at (ties by id).
  std::vector<std::string> list_patient_history(const std::string& patient_id) const;

 private:
  void write_index() const;

  std::filesystem::path root_;
  std::map<std::string, StoredRecordInfo> index_;
};

}  // namespace care
