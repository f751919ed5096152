#include "incidur/domain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "incidur/error.hpp"

namespace incidur {

namespace {

constexpr std::array<std::string_view, 4> kDirectionNames{"N", "S", "W", "E"};
constexpr std::array<std::string_view, 5> kCountyNames{"NE", "NW", "Central", "SE", "SW"};
constexpr std::array<std::string_view, 4> kEventNames{"crash1", "crash2", "crash3", "debris"};
constexpr std::array<std::string_view, 6> kDetectionNames{"police", "highway_helper", "automated",
                                                          "dot",    "cameras",        "other"};
constexpr std::array<std::string_view, 6> kResponderNames{"police", "tow", "dot", "dps", "ems", "hh"};
constexpr std::array<std::string_view, 3> kTerrainNames{"flat", "rolly", "hilly"};
constexpr std::array<std::string_view, 6> kTodNames{"morning", "early_afternoon", "afternoon",
                                                    "evening_rush", "evening", "night"};
constexpr std::array<std::string_view, 3> kBandNames{"short", "medium", "long"};

constexpr std::array<std::string_view, 21> kSourceFeatures{
    "tod",          "dow",           "season",       "year",     "direction",  "county_region",
    "city_number",  "event_type",    "lanes",        "only_shoulders_closed",  "vehicles",
    "trucks",       "injuries",      "fatalities",   "detection_method",       "aadt_bin",
    "hourly_volume", "surface_width", "surface_type", "terrain",  "responders"};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One raw source value prior to column expansion.
struct Cell {
  bool missing = true;
  double number = 0.0;
  int code = 0;
};

Cell number_cell(double v) { return Cell{false, v, 0}; }
Cell code_cell(int c) { return Cell{false, static_cast<double>(c), c}; }
template <typename T>
Cell optional_number(const std::optional<T>& v) {
  return v ? number_cell(static_cast<double>(*v)) : Cell{};
}

ColumnKind kind_of(std::string_view feature) {
  if (feature == "season" || feature == "aadt_bin") return ColumnKind::ordinal;
  if (feature == "year" || feature == "lanes" || feature == "hourly_volume" || feature == "surface_width")
    return ColumnKind::numeric;
  if (feature == "only_shoulders_closed" || feature == "injuries" || feature == "fatalities" ||
      feature == "responders")
    return ColumnKind::binary;
  return ColumnKind::onehot;
}

std::string category_label(std::string_view feature, int code) {
  if (feature == "tod") return std::string(kTodNames.at(code));
  if (feature == "direction") return std::string(kDirectionNames.at(code));
  if (feature == "county_region") return std::string(kCountyNames.at(code));
  if (feature == "event_type") return std::string(kEventNames.at(code));
  if (feature == "detection_method") return std::string(kDetectionNames.at(code));
  if (feature == "terrain") return std::string(kTerrainNames.at(code));
  if ((feature == "vehicles" || feature == "trucks") && code == 3) return "3+";
  return std::to_string(code);
}

[[noreturn]] void bad_value(std::string_view feature, std::size_t row, const std::string& detail) {
  std::ostringstream os;
  os << "field '" << feature << "' row " << row << ": " << detail;
  throw EncodingError(os.str());
}

Cell extract(const IncidentRecord& r, std::string_view feature, std::size_t row) {
  const auto check_range = [&](const std::optional<int>& v, int lo, int hi) {
    if (v && (*v < lo || *v > hi))
      bad_value(feature, row, "unknown category value " + std::to_string(*v));
  };
  if (feature == "tod") return code_cell(static_cast<int>(time_of_day(r.start_time.hour)));
  if (feature == "dow") return code_cell(derive_temporal(r.start_time).dow);
  if (feature == "season") return number_cell(derive_temporal(r.start_time).season);
  if (feature == "year") return number_cell(r.start_time.year);
  if (feature == "direction") return code_cell(static_cast<int>(r.direction));
  if (feature == "county_region") return code_cell(static_cast<int>(r.county_region));
  if (feature == "city_number") {
    if (r.city_number < 0) bad_value(feature, row, "unknown category value " + std::to_string(r.city_number));
    return code_cell(r.city_number);
  }
  if (feature == "event_type") return code_cell(static_cast<int>(r.event_type));
  if (feature == "lanes") {
    if (r.lanes && *r.lanes <= 0) bad_value(feature, row, "lanes must be positive");
    return optional_number(r.lanes);
  }
  if (feature == "only_shoulders_closed") return number_cell(r.only_shoulders_closed ? 1.0 : 0.0);
  if (feature == "vehicles") {
    check_range(r.vehicles, 0, 3);
    return r.vehicles ? code_cell(*r.vehicles) : Cell{};
  }
  if (feature == "trucks") {
    check_range(r.trucks, 0, 3);
    return r.trucks ? code_cell(*r.trucks) : Cell{};
  }
  if (feature == "injuries") return number_cell(r.injuries ? 1.0 : 0.0);
  if (feature == "fatalities") return number_cell(r.fatalities ? 1.0 : 0.0);
  if (feature == "detection_method")
    return r.detection_method ? code_cell(static_cast<int>(*r.detection_method)) : Cell{};
  if (feature == "aadt_bin") {
    check_range(r.aadt_bin, 1, 5);
    return optional_number(r.aadt_bin);
  }
  if (feature == "hourly_volume") {
    if (r.hourly_volume && *r.hourly_volume < 0) bad_value(feature, row, "negative volume");
    return optional_number(r.hourly_volume);
  }
  if (feature == "surface_width") {
    if (r.surface_width && !(*r.surface_width > 0.0)) bad_value(feature, row, "width must be positive");
    return optional_number(r.surface_width);
  }
  if (feature == "surface_type") {
    if (r.surface_type && *r.surface_type < 0)
      bad_value(feature, row, "unknown category value " + std::to_string(*r.surface_type));
    return r.surface_type ? code_cell(*r.surface_type) : Cell{};
  }
  if (feature == "terrain") return r.terrain ? code_cell(static_cast<int>(*r.terrain)) : Cell{};
  throw EncodingError("unknown source feature '" + std::string(feature) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

template <>
std::span<const std::string_view> enum_names<Direction>() {
  return kDirectionNames;
}
template <>
std::span<const std::string_view> enum_names<CountyRegion>() {
  return kCountyNames;
}
template <>
std::span<const std::string_view> enum_names<EventType>() {
  return kEventNames;
}
template <>
std::span<const std::string_view> enum_names<DetectionMethod>() {
  return kDetectionNames;
}
template <>
std::span<const std::string_view> enum_names<Responder>() {
  return kResponderNames;
}
template <>
std::span<const std::string_view> enum_names<Terrain>() {
  return kTerrainNames;
}
template <>
std::span<const std::string_view> enum_names<TimeOfDay>() {
  return kTodNames;
}
template <>
std::span<const std::string_view> enum_names<Band>() {
  return kBandNames;
}

bool CivilTime::valid() const {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  return ymd.ok() && hour >= 0 && hour < 24 && minute >= 0 && minute < 60 && second >= 0 && second < 61;
}

std::optional<CivilTime> parse_iso8601(std::string_view text) {
  CivilTime t;
  char sep = 0;
  int consumed = 0;
  const std::string s(text);
  const int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &t.year, &t.month, &t.day, &sep, &t.hour,
                            &t.minute, &consumed);
  if (n < 6 || (sep != 'T' && sep != ' ')) return std::nullopt;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && s[pos] == ':') {
    int sec_consumed = 0;
    if (std::sscanf(s.c_str() + pos, ":%2d%n", &t.second, &sec_consumed) != 1) return std::nullopt;
    pos += static_cast<std::size_t>(sec_consumed);
  }
  // Optional trailing UTC designator.
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size() || !t.valid()) return std::nullopt;
  return t;
}

std::string format_iso8601(const CivilTime& t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", t.year, t.month, t.day, t.hour, t.minute,
                t.second);
  return buf;
}

ResponderSet::ResponderSet(std::initializer_list<Responder> members) {
  for (Responder r : members) insert(r);
}

ResponderSet ResponderSet::from_bits(std::uint8_t bits) {
  ResponderSet s;
  s.bits_ = static_cast<std::uint8_t>(bits & 0x3F);
  return s;
}

void validate(const IncidentRecord& r) {
  std::vector<std::string> problems;
  if (!r.start_time.valid()) problems.emplace_back("start_time");
  if (r.city_number < 0) problems.emplace_back("city_number");
  if (r.lanes && *r.lanes <= 0) problems.emplace_back("lanes");
  if (r.vehicles && (*r.vehicles < 0 || *r.vehicles > 3)) problems.emplace_back("vehicles");
  if (r.trucks && (*r.trucks < 0 || *r.trucks > 3)) problems.emplace_back("trucks");
  if (!std::isfinite(r.measure) || r.measure < 0.0) problems.emplace_back("measure");
  if (r.aadt_bin && (*r.aadt_bin < 1 || *r.aadt_bin > 5)) problems.emplace_back("aadt_bin");
  if (r.hourly_volume && *r.hourly_volume < 0) problems.emplace_back("hourly_volume");
  if (r.surface_width && !(*r.surface_width > 0.0)) problems.emplace_back("surface_width");
  if (r.surface_type && *r.surface_type < 0) problems.emplace_back("surface_type");
  if (r.duration_minutes && !(*r.duration_minutes > 0.0)) problems.emplace_back("duration_minutes");
  if (problems.empty()) return;
  std::string msg = "invalid incident record";
  if (!r.id.empty()) msg += " '" + r.id + "'";
  msg += ": ";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? ", " : "") + problems[i];
  throw ValidationError(msg);
}

int aadt_bin_of(double aadt) {
  if (aadt < 8000.0) return 1;
  if (aadt < 12000.0) return 2;
  if (aadt < 24000.0) return 3;
  if (aadt <= 48000.0) return 4;
  return 5;
}

Band band_of(double duration_minutes) {
  if (!(duration_minutes > 0.0)) throw InvalidArgument("duration must be positive");
  if (duration_minutes < kShortUpperMinutes) return Band::Short;
  if (duration_minutes <= kMediumUpperMinutes) return Band::Medium;
  return Band::Long;
}

TimeOfDay time_of_day(int hour) {
  if (hour >= 7 && hour <= 9) return TimeOfDay::morning;
  if (hour >= 10 && hour <= 12) return TimeOfDay::early_afternoon;
  if (hour >= 13 && hour <= 15) return TimeOfDay::afternoon;
  if (hour >= 16 && hour <= 18) return TimeOfDay::evening_rush;
  if (hour >= 19 && hour <= 21) return TimeOfDay::evening;
  return TimeOfDay::night;
}

Temporal derive_temporal(const CivilTime& start) {
  using namespace std::chrono;
  const sys_days days{std::chrono::year{start.year} / std::chrono::month{static_cast<unsigned>(start.month)} /
                      std::chrono::day{static_cast<unsigned>(start.day)}};
  const unsigned iso = weekday{days}.iso_encoding();  // 1 = Monday
  const int m = start.month;
  int season = 4;
  if (m == 12 || m <= 2) {
    season = 1;
  } else if (m <= 5) {
    season = 2;
  } else if (m <= 8) {
    season = 3;
  }
  return Temporal{time_of_day(start.hour), static_cast<int>(iso) - 1, season, start.year};
}

// ---------------------------------------------------------------------------

FeatureSet FeatureSet::fs1() {
  return FeatureSet{FeatureSetKind::FS1_Basic,
                    {"tod", "dow", "season", "year", "direction", "county_region", "city_number", "event_type",
                     "lanes", "only_shoulders_closed", "vehicles", "trucks", "injuries", "fatalities",
                     "detection_method"}};
}

FeatureSet FeatureSet::fs2() {
  FeatureSet fs = fs1();
  fs.kind = FeatureSetKind::FS2_Full;
  for (const char* extra : {"aadt_bin", "hourly_volume", "surface_width", "surface_type", "terrain", "responders"})
    fs.columns.emplace_back(extra);
  return fs;
}

FeatureSet FeatureSet::of(FeatureSetKind kind) {
  if (kind == FeatureSetKind::FS2_Full) return fs2();
  if (kind == FeatureSetKind::FS1_Basic) return fs1();
  throw InvalidArgument("custom feature sets have no default columns");
}

std::string_view feature_set_name(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::FS1_Basic:
      return "fs1";
    case FeatureSetKind::FS2_Full:
      return "fs2";
    case FeatureSetKind::Custom:
      break;
  }
  return "custom";
}

std::optional<FeatureSetKind> parse_feature_set(std::string_view text) {
  if (text == "fs1" || text == "FS1") return FeatureSetKind::FS1_Basic;
  if (text == "fs2" || text == "FS2") return FeatureSetKind::FS2_Full;
  return std::nullopt;
}

std::span<const std::string_view> known_source_features() { return kSourceFeatures; }

// ---------------------------------------------------------------------------

std::vector<std::string> FeatureMatrix::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return names;
}

std::optional<std::size_t> FeatureMatrix::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  return std::nullopt;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const Eigen::Index> rows) const {
  FeatureMatrix out;
  out.columns = columns;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
  if (target) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) t(static_cast<Eigen::Index>(i)) = (*target)(rows[i]);
    out.target = std::move(t);
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
  FeatureMatrix out;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.columns.push_back(columns.at(cols[j]));
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(static_cast<Eigen::Index>(cols[j]));
  }
  out.target = target;
  return out;
}

FeatureMatrix vstack(const FeatureMatrix& top, const FeatureMatrix& bottom) {
  if (top.columns != bottom.columns) {
    check_schema(top.column_names(), bottom.column_names());
    throw SchemaMismatch("column metadata differs between stacked matrices");
  }
  FeatureMatrix out;
  out.columns = top.columns;
  out.values.resize(top.rows() + bottom.rows(), top.cols());
  out.values << top.values, bottom.values;
  if (top.target && bottom.target) {
    Eigen::VectorXd t(top.rows() + bottom.rows());
    t << *top.target, *bottom.target;
    out.target = std::move(t);
  }
  return out;
}

void check_schema(std::span<const std::string> expected, std::span<const std::string> actual) {
  if (std::equal(expected.begin(), expected.end(), actual.begin(), actual.end())) return;
  const std::set<std::string> want(expected.begin(), expected.end());
  const std::set<std::string> have(actual.begin(), actual.end());
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(missing));
  std::set_difference(have.begin(), have.end(), want.begin(), want.end(), std::back_inserter(extra));
  std::ostringstream os;
  os << "schema mismatch";
  if (missing.empty() && extra.empty()) os << ": column order differs";
  if (!missing.empty()) {
    os << "; missing columns:";
    for (const auto& m : missing) os << ' ' << m;
  }
  if (!extra.empty()) {
    os << "; extra columns:";
    for (const auto& e : extra) os << ' ' << e;
  }
  throw SchemaMismatch(os.str());
}

// ---------------------------------------------------------------------------

EncoderSchema::EncoderSchema(FeatureSet feature_set, std::vector<SourceEncoding> sources)
    : feature_set_(std::move(feature_set)), sources_(std::move(sources)) {}

EncoderSchema EncoderSchema::fit(std::span<const IncidentRecord> records, const FeatureSet& feature_set) {
  if (records.empty()) throw EncodingError("cannot encode an empty record list");
  if (feature_set.columns.empty()) throw EncodingError("feature set has no columns");
  std::vector<SourceEncoding> sources;
  std::set<std::string> seen;
  for (const auto& feature : feature_set.columns) {
    if (std::find(kSourceFeatures.begin(), kSourceFeatures.end(), feature) == kSourceFeatures.end())
      throw EncodingError("unknown source feature '" + feature + "'");
    if (!seen.insert(feature).second) throw EncodingError("duplicate source feature '" + feature + "'");
    SourceEncoding enc;
    enc.feature = feature;
    enc.kind = kind_of(feature);
    if (enc.kind == ColumnKind::onehot) {
      std::set<int> codes;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const Cell c = extract(records[i], feature, i);
        if (!c.missing) codes.insert(c.code);
      }
      if (codes.empty()) throw EncodingError("field '" + feature + "' has no observed categories");
      for (int code : codes) {
        enc.codes.push_back(code);
        enc.labels.push_back(category_label(feature, code));
      }
    } else {
      // Range checks happen here too so fit and encode reject the same rows.
      if (feature != "responders")
        for (std::size_t i = 0; i < records.size(); ++i) extract(records[i], feature, i);
    }
    sources.push_back(std::move(enc));
  }
  return EncoderSchema(feature_set, std::move(sources));
}

std::vector<Column> EncoderSchema::columns() const {
  std::vector<Column> cols;
  for (const auto& s : sources_) {
    if (s.feature == "responders") {
      for (auto name : kResponderNames) cols.push_back({"resp_" + std::string(name), ColumnKind::binary, s.feature});
    } else if (s.kind == ColumnKind::onehot) {
      for (const auto& label : s.labels) cols.push_back({s.feature + "=" + label, ColumnKind::onehot, s.feature});
    } else {
      cols.push_back({s.feature, s.kind, s.feature});
    }
  }
  return cols;
}

FeatureMatrix encode(std::span<const IncidentRecord> records, const EncoderSchema& schema) {
  if (records.empty()) throw EncodingError("cannot encode an empty record list");
  FeatureMatrix m;
  m.columns = schema.columns();
  if (m.columns.empty()) throw EncodingError("feature set has no columns");
  const auto n = static_cast<Eigen::Index>(records.size());
  m.values.setZero(n, static_cast<Eigen::Index>(m.columns.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const IncidentRecord& r = records[static_cast<std::size_t>(i)];
    Eigen::Index col = 0;
    for (const auto& s : schema.sources()) {
      if (s.feature == "responders") {
        for (std::size_t k = 0; k < kResponderNames.size(); ++k, ++col)
          m.values(i, col) = r.responders ? (r.responders->contains(static_cast<Responder>(k)) ? 1.0 : 0.0) : kNaN;
        continue;
      }
      const Cell c = extract(r, s.feature, static_cast<std::size_t>(i));
      if (s.kind == ColumnKind::onehot) {
        const auto width = static_cast<Eigen::Index>(s.codes.size());
        const auto it = std::find(s.codes.begin(), s.codes.end(), c.code);
        if (c.missing || it == s.codes.end()) {
          m.values.row(i).segment(col, width).setConstant(kNaN);
        } else {
          m.values(i, col + (it - s.codes.begin())) = 1.0;
        }
        col += width;
      } else {
        m.values(i, col++) = c.missing ? kNaN : c.number;
      }
    }
  }
  return m;
}

FeatureMatrix encode(std::span<const IncidentRecord> records, const FeatureSet& feature_set) {
  return encode(records, EncoderSchema::fit(records, feature_set));
}

std::vector<std::string> decode_onehot(const FeatureMatrix& matrix, std::string_view source) {
  std::vector<std::size_t> group;
  for (std::size_t j = 0; j < matrix.columns.size(); ++j)
    if (matrix.columns[j].source == source && matrix.columns[j].kind == ColumnKind::onehot) group.push_back(j);
  if (group.empty()) throw InvalidArgument("no one-hot group for '" + std::string(source) + "'");
  std::vector<std::string> out(static_cast<std::size_t>(matrix.rows()));
  const std::string prefix = std::string(source) + "=";
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (std::size_t j : group) {
      if (matrix.values(i, static_cast<Eigen::Index>(j)) == 1.0) {
        out[static_cast<std::size_t>(i)] = matrix.columns[j].name.substr(prefix.size());
        break;
      }
    }
  }
  return out;
}

Eigen::VectorXd duration_vector(std::span<const IncidentRecord> records) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].duration_minutes) throw DataError("record '" + records[i].id + "' has no duration");
    y(static_cast<Eigen::Index>(i)) = *records[i].duration_minutes;
  }
  return y;
}

std::vector<Band> band_vector(std::span<const IncidentRecord> records) {
  std::vector<Band> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.duration_minutes) throw DataError("record '" + r.id + "' has no duration");
    out.push_back(band_of(*r.duration_minutes));
  }
  return out;
}

}  // namespace incidur
