#include "incidur/incident_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "incidur/error.hpp"

namespace incidur {

namespace {

constexpr std::array<std::string_view, 22> kFields{
    "id",           "start_time", "direction",        "county_region", "city_number",  "event_type",
    "lanes",        "only_shoulders_closed", "vehicles", "trucks",     "injuries",     "fatalities",
    "detection_method", "responders", "route_id",     "measure",       "aadt_bin",     "hourly_volume",
    "surface_width", "surface_type", "terrain",         "duration_minutes"};

constexpr std::array<std::string_view, 10> kRequired{
    "start_time", "direction", "county_region", "city_number", "event_type",
    "only_shoulders_closed", "injuries", "fatalities", "route_id", "measure"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  return std::nullopt;
}

std::optional<int> parse_count(std::string_view s) {
  if (s == "3+") return 3;
  auto v = parse_int(s);
  if (!v || *v < 0 || *v > 3) return std::nullopt;
  return static_cast<int>(*v);
}

std::optional<ResponderSet> parse_responders(std::string_view s) {
  ResponderSet set;
  if (s == "none") return set;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t bar = s.find('|', start);
    const std::string_view token = trim(s.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start));
    const auto r = parse_enum<Responder>(token);
    if (!r || set.contains(*r)) return std::nullopt;  // duplicates rejected
    set.insert(*r);
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return set;
}

std::string format_responders(const ResponderSet& set) {
  if (set.empty()) return "none";
  std::string out;
  for (std::size_t k = 0; k < enum_names<Responder>().size(); ++k) {
    if (!set.contains(static_cast<Responder>(k))) continue;
    if (!out.empty()) out += '|';
    out += enum_names<Responder>()[k];
  }
  return out;
}

std::string format_count(int v) { return v == 3 ? "3+" : std::to_string(v); }

}  // namespace

std::span<const std::string_view> incident_fields() { return kFields; }
std::span<const std::string_view> required_incident_fields() { return kRequired; }

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

IncidentRecord record_from_fields(const FieldMap& fields) {
  std::vector<std::string> unknown;
  std::vector<std::string> missing;
  std::vector<std::string> invalid;
  for (const auto& [key, _] : fields)
    if (std::find(kFields.begin(), kFields.end(), key) == kFields.end()) unknown.push_back(key);

  const auto get = [&](std::string_view key) -> std::optional<std::string_view> {
    const auto it = fields.find(key);
    if (it == fields.end()) return std::nullopt;
    const std::string_view v = trim(it->second);
    if (v.empty()) return std::nullopt;
    return v;
  };
  for (auto key : kRequired)
    if (!get(key)) missing.emplace_back(key);

  IncidentRecord r;
  // Each parser records the field name on failure and leaves the default.
  const auto with = [&](std::string_view key, auto&& apply) {
    if (auto v = get(key)) {
      if (!apply(*v)) invalid.emplace_back(key);
    }
  };
  with("id", [&](std::string_view v) { r.id = std::string(v); return true; });
  with("start_time", [&](std::string_view v) {
    auto t = parse_iso8601(v);
    if (t) r.start_time = *t;
    return t.has_value();
  });
  with("direction", [&](std::string_view v) {
    auto e = parse_enum<Direction>(v);
    if (e) r.direction = *e;
    return e.has_value();
  });
  with("county_region", [&](std::string_view v) {
    auto e = parse_enum<CountyRegion>(v);
    if (e) r.county_region = *e;
    return e.has_value();
  });
  with("city_number", [&](std::string_view v) {
    auto i = parse_int(v);
    if (i && *i >= 0 && *i < 1000000) r.city_number = static_cast<int>(*i);
    return i && *i >= 0 && *i < 1000000;
  });
  with("event_type", [&](std::string_view v) {
    auto e = parse_enum<EventType>(v);
    if (e) r.event_type = *e;
    return e.has_value();
  });
  with("lanes", [&](std::string_view v) {
    auto i = parse_int(v);
    if (i && *i > 0 && *i < 100) r.lanes = static_cast<int>(*i);
    return i && *i > 0 && *i < 100;
  });
  with("only_shoulders_closed", [&](std::string_view v) {
    auto b = parse_bool(v);
    if (b) r.only_shoulders_closed = *b;
    return b.has_value();
  });
  with("vehicles", [&](std::string_view v) {
    auto c = parse_count(v);
    r.vehicles = c;
    return c.has_value();
  });
  with("trucks", [&](std::string_view v) {
    auto c = parse_count(v);
    r.trucks = c;
    return c.has_value();
  });
  with("injuries", [&](std::string_view v) {
    auto b = parse_bool(v);
    if (b) r.injuries = *b;
    return b.has_value();
  });
  with("fatalities", [&](std::string_view v) {
    auto b = parse_bool(v);
    if (b) r.fatalities = *b;
    return b.has_value();
  });
  with("detection_method", [&](std::string_view v) {
    auto e = parse_enum<DetectionMethod>(v);
    r.detection_method = e;
    return e.has_value();
  });
  with("responders", [&](std::string_view v) {
    auto s = parse_responders(v);
    r.responders = s;
    return s.has_value();
  });
  with("route_id", [&](std::string_view v) { r.route_id = std::string(v); return true; });
  with("measure", [&](std::string_view v) {
    auto d = parse_real(v);
    if (d && *d >= 0.0) r.measure = *d;
    return d && *d >= 0.0;
  });
  with("aadt_bin", [&](std::string_view v) {
    auto i = parse_int(v);
    const bool ok = i && *i >= 1 && *i <= 5;
    if (ok) r.aadt_bin = static_cast<int>(*i);
    return ok;
  });
  with("hourly_volume", [&](std::string_view v) {
    auto i = parse_int(v);
    const bool ok = i && *i >= 0 && *i < 100000000;
    if (ok) r.hourly_volume = static_cast<int>(*i);
    return ok;
  });
  with("surface_width", [&](std::string_view v) {
    auto d = parse_real(v);
    const bool ok = d && *d > 0.0;
    if (ok) r.surface_width = *d;
    return ok;
  });
  with("surface_type", [&](std::string_view v) {
    auto i = parse_int(v);
    const bool ok = i && *i >= 0 && *i < 1000;
    if (ok) r.surface_type = static_cast<int>(*i);
    return ok;
  });
  with("terrain", [&](std::string_view v) {
    auto e = parse_enum<Terrain>(v);
    r.terrain = e;
    return e.has_value();
  });
  with("duration_minutes", [&](std::string_view v) {
    auto d = parse_real(v);
    const bool ok = d && *d > 0.0;
    if (ok) r.duration_minutes = *d;
    return ok;
  });

  if (!unknown.empty() || !missing.empty() || !invalid.empty()) {
    std::ostringstream os;
    os << "invalid incident";
    if (!r.id.empty()) os << " '" << r.id << "'";
    const auto list = [&](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      os << "; " << label << ":";
      for (const auto& n : names) os << ' ' << n;
    };
    list("unknown fields", unknown);
    list("missing fields", missing);
    list("invalid fields", invalid);
    throw ValidationError(os.str());
  }
  validate(r);
  return r;
}

FieldMap record_to_fields(const IncidentRecord& r) {
  FieldMap f;
  const auto opt_int = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  f["id"] = r.id;
  f["start_time"] = format_iso8601(r.start_time);
  f["direction"] = std::string(to_string(r.direction));
  f["county_region"] = std::string(to_string(r.county_region));
  f["city_number"] = std::to_string(r.city_number);
  f["event_type"] = std::string(to_string(r.event_type));
  f["lanes"] = opt_int(r.lanes);
  f["only_shoulders_closed"] = r.only_shoulders_closed ? "1" : "0";
  f["vehicles"] = r.vehicles ? format_count(*r.vehicles) : "";
  f["trucks"] = r.trucks ? format_count(*r.trucks) : "";
  f["injuries"] = r.injuries ? "1" : "0";
  f["fatalities"] = r.fatalities ? "1" : "0";
  f["detection_method"] = r.detection_method ? std::string(to_string(*r.detection_method)) : "";
  f["responders"] = r.responders ? format_responders(*r.responders) : "";
  f["route_id"] = r.route_id;
  f["measure"] = format_double(r.measure);
  f["aadt_bin"] = opt_int(r.aadt_bin);
  f["hourly_volume"] = opt_int(r.hourly_volume);
  f["surface_width"] = r.surface_width ? format_double(*r.surface_width) : "";
  f["surface_type"] = opt_int(r.surface_type);
  f["terrain"] = r.terrain ? std::string(to_string(*r.terrain)) : "";
  f["duration_minutes"] = r.duration_minutes ? format_double(*r.duration_minutes) : "";
  return f;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<IncidentRecord> read_incidents_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("incident CSV is empty");
  const auto header = split_csv_line(line);
  for (const auto& h : header) {
    if (std::find(kFields.begin(), kFields.end(), h) == kFields.end())
      throw ValidationError("incident CSV header: unknown field '" + h + "'");
  }
  std::vector<IncidentRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("incident CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    FieldMap fields;
    for (std::size_t j = 0; j < header.size(); ++j) fields[header[j]] = cells[j];
    try {
      records.push_back(record_from_fields(fields));
    } catch (const ValidationError& e) {
      throw ValidationError("incident CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<IncidentRecord> read_incidents_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open incident CSV '" + path.string() + "'");
  return read_incidents_csv(in);
}

void write_incidents_csv(std::ostream& out, std::span<const IncidentRecord> records) {
  for (std::size_t j = 0; j < kFields.size(); ++j) out << (j ? "," : "") << kFields[j];
  out << '\n';
  for (const auto& r : records) {
    const FieldMap f = record_to_fields(r);
    for (std::size_t j = 0; j < kFields.size(); ++j) out << (j ? "," : "") << csv_escape(f.find(kFields[j])->second);
    out << '\n';
  }
}

void write_incidents_csv(const std::filesystem::path& path, std::span<const IncidentRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_incidents_csv(out, records);
}

}  // namespace incidur
