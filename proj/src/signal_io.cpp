#include "care/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "care/error.hpp"
#include "care/text.hpp"
#include "csv.hpp"

namespace care {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// EcgRecord

std::optional<std::size_t> EcgRecord::lead_index(const std::string& name) const {
  for (std::size_t i = 0; i < lead_names.size(); ++i) {
    if (lead_names[i] == name) return i;
  }
  return std::nullopt;
}

void EcgRecord::validate() const {
  if (!(sampling_rate_hz >= 50.0 && sampling_rate_hz <= 2000.0)) {
    throw Error(ErrorCode::BadRate, "sampling rate " + text::format_double(sampling_rate_hz) +
                                        " Hz outside [50, 2000]");
  }
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "record has no leads");
  if (lead_names.size() != samples.size()) {
    throw Error(ErrorCode::InvalidArgument, "lead name count does not match lead count");
  }
  std::set<std::string> unique(lead_names.begin(), lead_names.end());
  if (unique.size() != lead_names.size()) {
    throw Error(ErrorCode::InvalidArgument, "lead names are not unique");
  }
  const std::size_t t = samples.front().size();
  for (const auto& lead : samples) {
    if (lead.size() != t) throw Error(ErrorCode::InvalidArgument, "leads differ in length");
    for (double v : lead) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite sample value");
    }
  }
  if (static_cast<double>(t) < 2.0 * sampling_rate_hz) {
    throw Error(ErrorCode::TooShort, std::to_string(t) + " samples is below 2 s at " +
                                         text::format_double(sampling_rate_hz) + " Hz");
  }
}

bool operator==(const EcgRecord& a, const EcgRecord& b) {
  return a.record_id == b.record_id && a.patient_id == b.patient_id &&
         a.acquired_at == b.acquired_at && a.sampling_rate_hz == b.sampling_rate_hz &&
         a.lead_names == b.lead_names && a.samples == b.samples;
}

// ---------------------------------------------------------------------------
// CSV

EcgRecord parse_csv_record(std::string_view content, const CsvReadOptions& opts,
                           const std::string& source_name) {
  if (!(opts.sampling_rate_hz >= 50.0 && opts.sampling_rate_hz <= 2000.0)) {
    throw Error(ErrorCode::BadRate, "sampling rate " + text::format_double(opts.sampling_rate_hz) +
                                        " Hz outside [50, 2000]");
  }
  auto table = csv::parse(content);
  if (table.rows.empty()) throw Error(ErrorCode::MalformedCsv, source_name + ": empty file");

  std::size_t first = 0;
  std::vector<std::string> header;
  const auto& row0 = table.rows.front();
  bool header_row = std::any_of(row0.begin(), row0.end(),
                                [](const std::string& c) { return !csv::parse_number(c); });
  if (header_row) {
    for (const auto& c : row0) header.push_back(text::trim(c));
    first = 1;
  }
  const std::size_t ncols = table.rows.front().size();

  EcgRecord rec;
  rec.record_id = opts.record_id.value_or(fs::path(source_name).stem().string());
  rec.sampling_rate_hz = opts.sampling_rate_hz;
  if (!opts.lead_names.empty()) {
    rec.lead_names = opts.lead_names;
  } else if (!header.empty()) {
    rec.lead_names = header;
  } else {
    for (std::size_t c = 0; c < ncols; ++c) rec.lead_names.push_back("lead" + std::to_string(c + 1));
  }
  if (rec.lead_names.size() != ncols) {
    throw Error(ErrorCode::MalformedCsv, source_name + ": " + std::to_string(ncols) +
                                             " columns but " + std::to_string(rec.lead_names.size()) +
                                             " lead names");
  }
  rec.samples.assign(ncols, {});
  for (std::size_t r = first; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    if (row.size() != ncols) {
      throw Error(ErrorCode::MalformedCsv, source_name + ": ragged row at line " +
                                               std::to_string(line));
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      auto v = csv::parse_number(row[c]);
      if (!v) {
        throw Error(ErrorCode::MalformedCsv, source_name + ": non-numeric cell at line " +
                                                 std::to_string(line) + ", column " +
                                                 std::to_string(c + 1));
      }
      rec.samples[c].push_back(*v * opts.scale);
    }
  }
  rec.validate();
  return rec;
}

EcgRecord read_csv_record(const fs::path& path, const CsvReadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv_record(ss.str(), opts, path.string());
}

// ---------------------------------------------------------------------------
// WFDB format 16

namespace {

struct WfdbSignal {
  std::string file_name;
  std::string format;
  double gain = 200.0;
  double baseline = 0.0;
  std::string description;
};

struct WfdbHeader {
  std::string record_name;
  std::size_t num_signals = 0;
  double fs = 0.0;
  std::optional<std::size_t> num_samples;
  std::vector<WfdbSignal> signals;
};

double parse_header_number(const std::string& tok, const std::string& what) {
  auto v = csv::parse_number(tok);
  if (!v) throw Error(ErrorCode::HeaderMismatch, "cannot parse " + what + " '" + tok + "'");
  return *v;
}

WfdbHeader parse_wfdb_header(std::string_view text_content) {
  std::vector<std::vector<std::string>> lines;
  std::istringstream in{std::string(text_content)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ls(t);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    lines.push_back(std::move(toks));
  }
  if (lines.empty() || lines.front().size() < 2) {
    throw Error(ErrorCode::HeaderMismatch, "missing record line");
  }
  WfdbHeader h;
  const auto& rl = lines.front();
  h.record_name = rl[0];
  // Multi-segment records ("name/segments") are not format-16 single files.
  if (h.record_name.find('/') != std::string::npos) {
    throw Error(ErrorCode::UnsupportedFormat, "multi-segment record " + h.record_name);
  }
  h.num_signals = static_cast<std::size_t>(parse_header_number(rl[1], "signal count"));
  h.fs = 250.0;
  if (rl.size() > 2) {
    auto f = rl[2].substr(0, rl[2].find_first_of("/("));
    h.fs = parse_header_number(f, "sampling frequency");
  }
  if (rl.size() > 3) h.num_samples = static_cast<std::size_t>(parse_header_number(rl[3], "sample count"));
  if (lines.size() < 1 + h.num_signals) {
    throw Error(ErrorCode::HeaderMismatch, "header declares " + std::to_string(h.num_signals) +
                                               " signals but lists " +
                                               std::to_string(lines.size() - 1));
  }
  for (std::size_t i = 0; i < h.num_signals; ++i) {
    const auto& sl = lines[1 + i];
    if (sl.size() < 2) throw Error(ErrorCode::HeaderMismatch, "short signal line " + std::to_string(i + 1));
    WfdbSignal s;
    s.file_name = sl[0];
    s.format = sl[1];
    std::optional<double> adc_zero;
    if (sl.size() > 4) adc_zero = csv::parse_number(sl[4]);
    if (sl.size() > 2) {
      // gain[(baseline)][/units]
      std::string g = sl[2];
      auto slash = g.find('/');
      if (slash != std::string::npos) g = g.substr(0, slash);
      auto paren = g.find('(');
      if (paren != std::string::npos) {
        auto close = g.find(')', paren);
        if (close == std::string::npos) throw Error(ErrorCode::HeaderMismatch, "bad gain field " + sl[2]);
        s.baseline = parse_header_number(g.substr(paren + 1, close - paren - 1), "baseline");
        g = g.substr(0, paren);
      } else {
        s.baseline = adc_zero.value_or(0.0);
      }
      s.gain = parse_header_number(g, "gain");
      if (s.gain == 0.0) s.gain = 200.0;
    }
    if (sl.size() > 8) {
      std::string desc;
      for (std::size_t k = 8; k < sl.size(); ++k) {
        if (!desc.empty()) desc.push_back(' ');
        desc += sl[k];
      }
      s.description = desc;
    } else {
      s.description = "sig" + std::to_string(i + 1);
    }
    h.signals.push_back(std::move(s));
  }
  return h;
}

}  // namespace

EcgRecord parse_wfdb16_record(std::string_view header_text, std::string_view signal_bytes) {
  auto h = parse_wfdb_header(header_text);
  if (h.num_signals == 0) throw Error(ErrorCode::HeaderMismatch, "record has no signals");
  std::size_t byte_offset = 0;
  for (const auto& s : h.signals) {
    std::string fmt = s.format;
    std::size_t offset = 0;
    auto plus = fmt.find('+');
    if (plus != std::string::npos) {
      offset = static_cast<std::size_t>(parse_header_number(fmt.substr(plus + 1), "byte offset"));
      fmt = fmt.substr(0, plus);
    }
    auto x = fmt.find_first_of("x:");
    if (x != std::string::npos) fmt = fmt.substr(0, x);
    if (fmt != "16") throw Error(ErrorCode::UnsupportedFormat, "storage format " + s.format);
    if (s.file_name != h.signals.front().file_name) {
      throw Error(ErrorCode::UnsupportedFormat, "signals split across multiple files");
    }
    byte_offset = offset;
  }
  if (signal_bytes.size() < byte_offset) {
    throw Error(ErrorCode::HeaderMismatch, "signal file shorter than byte offset");
  }
  const std::size_t payload = signal_bytes.size() - byte_offset;
  const std::size_t frame = 2 * h.num_signals;
  if (payload % frame != 0) {
    throw Error(ErrorCode::HeaderMismatch, "signal file size " + std::to_string(payload) +
                                               " is not a whole number of frames");
  }
  const std::size_t frames = payload / frame;
  if (h.num_samples && *h.num_samples != frames) {
    throw Error(ErrorCode::HeaderMismatch, "header declares " + std::to_string(*h.num_samples) +
                                               " samples, signal file holds " +
                                               std::to_string(frames));
  }

  EcgRecord rec;
  rec.record_id = h.record_name;
  rec.sampling_rate_hz = h.fs;
  rec.samples.assign(h.num_signals, std::vector<double>(frames));
  for (const auto& s : h.signals) rec.lead_names.push_back(s.description);
  const auto* bytes = reinterpret_cast<const unsigned char*>(signal_bytes.data()) + byte_offset;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < h.num_signals; ++c) {
      const auto* p = bytes + (t * h.num_signals + c) * 2;
      auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0]) |
                                           (static_cast<std::uint16_t>(p[1]) << 8));
      rec.samples[c][t] = (static_cast<double>(raw) - h.signals[c].baseline) / h.signals[c].gain;
    }
  }
  rec.validate();
  return rec;
}

EcgRecord read_wfdb16_record(const fs::path& header_path) {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto header = slurp(header_path);
  auto h = parse_wfdb_header(header);
  if (h.signals.empty()) throw Error(ErrorCode::HeaderMismatch, "record has no signals");
  // Validate formats before touching the signal file so format errors win.
  for (const auto& s : h.signals) {
    auto fmt = s.format.substr(0, s.format.find_first_of("+x:"));
    if (fmt != "16") throw Error(ErrorCode::UnsupportedFormat, "storage format " + s.format);
  }
  auto signal = slurp(header_path.parent_path() / h.signals.front().file_name);
  return parse_wfdb16_record(header, signal);
}

// ---------------------------------------------------------------------------
// Feature CSV

std::vector<BiomarkerVector> parse_feature_csv(std::string_view content) {
  auto table = csv::parse(content);
  if (table.rows.empty()) throw Error(ErrorCode::MalformedCsv, "feature table has no header");
  std::vector<std::string> header;
  for (const auto& c : table.rows.front()) header.push_back(text::trim(c));
  if (header.size() < 2) throw Error(ErrorCode::MalformedCsv, "feature table needs factor columns");
  std::set<std::string> seen;
  std::vector<BiomarkerVector> out;
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::MalformedCsv, "ragged row at line " + std::to_string(line));
    }
    BiomarkerVector v;
    v.record_id = text::trim(row[0]);
    if (v.record_id.empty()) throw Error(ErrorCode::MalformedCsv, "empty record_id at line " + std::to_string(line));
    if (!seen.insert(v.record_id).second) throw Error(ErrorCode::DuplicateRecordId, v.record_id);
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (text::trim(row[c]).empty()) {
        v.quality[header[c]] = Quality::missing;
        continue;
      }
      auto num = csv::parse_number(row[c]);
      if (!num) {
        throw Error(ErrorCode::MalformedCsv, "non-numeric cell at line " + std::to_string(line) +
                                                 ", column " + header[c]);
      }
      v.values[header[c]] = *num;
      v.quality[header[c]] = Quality::ok;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<BiomarkerVector> read_feature_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feature_csv(ss.str());
}

// ---------------------------------------------------------------------------
// RecordStore

namespace {

void check_record_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") throw Error(ErrorCode::InvalidArgument, "invalid record id '" + id + "'");
  for (char c : id) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) throw Error(ErrorCode::InvalidArgument, "invalid character in record id '" + id + "'");
  }
}

json info_to_json(const StoredRecordInfo& info) {
  json j;
  j["record_id"] = info.record_id;
  j["patient_id"] = info.patient_id ? json(*info.patient_id) : json(nullptr);
  j["acquired_at"] = info.acquired_at ? json(*info.acquired_at) : json(nullptr);
  j["sampling_rate_hz"] = info.sampling_rate_hz;
  j["lead_names"] = info.lead_names;
  j["num_samples"] = info.num_samples;
  return j;
}

StoredRecordInfo info_from_json(const json& j) {
  StoredRecordInfo info;
  info.record_id = j.at("record_id").get<std::string>();
  if (!j.at("patient_id").is_null()) info.patient_id = j.at("patient_id").get<std::string>();
  if (!j.at("acquired_at").is_null()) info.acquired_at = j.at("acquired_at").get<double>();
  info.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
  info.lead_names = j.at("lead_names").get<std::vector<std::string>>();
  info.num_samples = j.at("num_samples").get<std::size_t>();
  return info;
}

void write_file_atomic(const fs::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}

}  // namespace

RecordStore::RecordStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "records", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create store at " + root_.string() + ": " + ec.message());
  const auto index_path = root_ / "index.json";
  if (fs::exists(index_path)) {
    std::ifstream in(index_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + index_path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::IoError, "corrupt index " + index_path.string() + ": " + e.what());
    }
    for (const auto& entry : j.at("records")) {
      auto info = info_from_json(entry);
      index_[info.record_id] = std::move(info);
    }
  } else {
    write_index();
  }
}

void RecordStore::write_index() const {
  json records = json::array();
  for (const auto& [id, info] : index_) records.push_back(info_to_json(info));
  json j;
  j["version"] = 1;
  j["records"] = records;
  write_file_atomic(root_ / "index.json", j.dump(2));
}

std::string RecordStore::store(const EcgRecord& rec) {
  check_record_id(rec.record_id);
  rec.validate();
  if (index_.count(rec.record_id)) throw Error(ErrorCode::DuplicateRecordId, rec.record_id);
  const auto dir = root_ / "records" / rec.record_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());

  std::string blob;
  blob.resize(rec.num_leads() * rec.num_samples() * 8);
  std::size_t off = 0;
  for (const auto& lead : rec.samples) {
    for (double v : lead) {
      auto bits = to_little(std::bit_cast<std::uint64_t>(v));
      std::memcpy(blob.data() + off, &bits, 8);
      off += 8;
    }
  }
  write_file_atomic(dir / "samples.f64", blob);

  StoredRecordInfo info{rec.record_id, rec.patient_id, rec.acquired_at, rec.sampling_rate_hz,
                        rec.lead_names, rec.num_samples()};
  write_file_atomic(dir / "meta.json", info_to_json(info).dump(2));
  index_[rec.record_id] = info;
  write_index();
  return rec.record_id;
}

bool RecordStore::contains(const std::string& record_id) const { return index_.count(record_id) > 0; }

const StoredRecordInfo& RecordStore::info(const std::string& record_id) const {
  auto it = index_.find(record_id);
  if (it == index_.end()) throw Error(ErrorCode::NotFound, "record " + record_id);
  return it->second;
}

EcgRecord RecordStore::load(const std::string& record_id) const {
  const auto& meta = info(record_id);
  const auto path = root_ / "records" / record_id / "samples.f64";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t c = meta.lead_names.size();
  if (blob.size() != c * meta.num_samples * 8) {
    throw Error(ErrorCode::IoError, "sample file size mismatch for " + record_id);
  }
  EcgRecord rec;
  rec.record_id = meta.record_id;
  rec.patient_id = meta.patient_id;
  rec.acquired_at = meta.acquired_at;
  rec.sampling_rate_hz = meta.sampling_rate_hz;
  rec.lead_names = meta.lead_names;
  rec.samples.assign(c, std::vector<double>(meta.num_samples));
  std::size_t off = 0;
  for (auto& lead : rec.samples) {
    for (auto& v : lead) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, blob.data() + off, 8);
      v = std::bit_cast<double>(to_little(bits));
      off += 8;
    }
  }
  return rec;
}

std::vector<std::string> RecordStore::list_records() const {
  std::vector<std::string> ids;
  for (const auto& [id, info] : index_) ids.push_back(id);
  return ids;
}

std::vector<std::string> RecordStore::list_patient_history(const std::string& patient_id) const {
  std::vector<const StoredRecordInfo*> hits;
  for (const auto& [id, info] : index_) {
    if (info.patient_id == patient_id && info.acquired_at) hits.push_back(&info);
  }
  std::sort(hits.begin(), hits.end(), [](const auto* a, const auto* b) {
    if (*a->acquired_at != *b->acquired_at) return *a->acquired_at < *b->acquired_at;
    return a->record_id < b->record_id;
  });
  std::vector<std::string> ids;
  for (const auto* h : hits) ids.push_back(h->record_id);
  return ids;
}

}  // namespace care
