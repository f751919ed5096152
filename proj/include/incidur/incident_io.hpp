#pragma once

// Canonical incident CSV: header of snake_case field names, ISO-8601 times,
// empty cell = missing. Responders are '|'-separated; "none" is the empty set.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "incidur/domain.hpp"

namespace incidur {

using FieldMap = std::map<std::string, std::string, std::less<>>;

std::span<const std::string_view> incident_fields();
// Fields that must be non-empty for a record to be usable at all.
std::span<const std::string_view> required_incident_fields();

// Throws ValidationError naming unknown fields, missing required fields and
// unparseable values.
IncidentRecord record_from_fields(const FieldMap& fields);
FieldMap record_to_fields(const IncidentRecord& record);

std::vector<IncidentRecord> read_incidents_csv(std::istream& in);
std::vector<IncidentRecord> read_incidents_csv(const std::filesystem::path& path);
void write_incidents_csv(std::ostream& out, std::span<const IncidentRecord> records);
void write_incidents_csv(const std::filesystem::path& path, std::span<const IncidentRecord> records);

// Minimal RFC-4180 field splitting (double quotes, "" escapes).
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace incidur
