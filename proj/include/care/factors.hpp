#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace care {

enum class Quality { ok, low_confidence, missing };

std::string_view to_string(Quality q);
Quality quality_from_string(std::string_view s);

/// Named continuous factors for one record.
struct BiomarkerVector {
  std::string record_id;
  std::map<std::string, double> values;
  std::map<std::string, Quality> quality;

  /// Value if present and not `missing`.
  std::optional<double> get(const std::string& factor) const;
  bool usable(const std::string& factor) const;
};

/// Default 8-factor schema, in declaration order.
const std::vector<std::string>& default_factor_schema();

/// Adds `missing` entries for absent schema factors; throws SchemaMismatch on
/// factors outside the schema.
BiomarkerVector conform_to_schema(BiomarkerVector v, const std::vector<std::string>& schema);

}  // namespace care
