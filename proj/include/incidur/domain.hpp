#pragma once

// Incident schema, duration bands, feature sets and the categorical encoder.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace incidur {

// ---------------------------------------------------------------------------
// Enumerations

enum class Direction : std::uint8_t { N, S, W, E };
enum class CountyRegion : std::uint8_t { NE, NW, Central, SE, SW };
enum class EventType : std::uint8_t { crash1, crash2, crash3, debris };
enum class DetectionMethod : std::uint8_t { police, highway_helper, automated, dot, cameras, other };
enum class Responder : std::uint8_t { police, tow, dot, dps, ems, hh };
enum class Terrain : std::uint8_t { flat, rolly, hilly };
enum class TimeOfDay : std::uint8_t { morning, early_afternoon, afternoon, evening_rush, evening, night };

// Ordered Short < Medium < Long; the underlying value doubles as class label.
enum class Band : std::uint8_t { Short = 0, Medium = 1, Long = 2 };
inline constexpr int kBandCount = 3;
inline constexpr std::array<Band, 3> kAllBands{Band::Short, Band::Medium, Band::Long};

inline constexpr double kShortUpperMinutes = 30.0;   // Short = [0, 30)
inline constexpr double kMediumUpperMinutes = 120.0;  // Medium = [30, 120], Long = (120, inf)

template <typename E>
std::span<const std::string_view> enum_names();

template <>
std::span<const std::string_view> enum_names<Direction>();
template <>
std::span<const std::string_view> enum_names<CountyRegion>();
template <>
std::span<const std::string_view> enum_names<EventType>();
template <>
std::span<const std::string_view> enum_names<DetectionMethod>();
template <>
std::span<const std::string_view> enum_names<Responder>();
template <>
std::span<const std::string_view> enum_names<Terrain>();
template <>
std::span<const std::string_view> enum_names<TimeOfDay>();
template <>
std::span<const std::string_view> enum_names<Band>();

template <typename E>
std::string_view to_string(E value) {
  return enum_names<E>()[static_cast<std::size_t>(value)];
}

template <typename E>
std::optional<E> parse_enum(std::string_view text) {
  const auto names = enum_names<E>();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) return static_cast<E>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Records

struct CivilTime {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  bool valid() const;
  friend bool operator==(const CivilTime&, const CivilTime&) = default;
};

// "YYYY-MM-DDTHH:MM[:SS]" (a space is accepted in place of the T).
std::optional<CivilTime> parse_iso8601(std::string_view text);
std::string format_iso8601(const CivilTime& t);

class ResponderSet {
 public:
  ResponderSet() = default;
  ResponderSet(std::initializer_list<Responder> members);

  void insert(Responder r) { bits_ |= mask(r); }
  bool contains(Responder r) const { return (bits_ & mask(r)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  static ResponderSet from_bits(std::uint8_t bits);

  friend bool operator==(const ResponderSet&, const ResponderSet&) = default;

 private:
  static std::uint8_t mask(Responder r) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r)); }
  std::uint8_t bits_ = 0;
};

struct IncidentRecord {
  std::string id;
  CivilTime start_time;
  Direction direction = Direction::N;
  CountyRegion county_region = CountyRegion::Central;
  int city_number = 0;
  EventType event_type = EventType::crash1;
  std::optional<int> lanes;
  bool only_shoulders_closed = false;
  std::optional<int> vehicles;  // 0, 1, 2, 3 (= 3 or more)
  std::optional<int> trucks;    // same coding as vehicles
  bool injuries = false;
  bool fatalities = false;
  std::optional<DetectionMethod> detection_method;
  std::optional<ResponderSet> responders;  // absent until responder details arrive
  std::string route_id;
  double measure = 0.0;
  std::optional<int> aadt_bin;  // 1..5
  std::optional<int> hourly_volume;
  std::optional<double> surface_width;
  std::optional<int> surface_type;
  std::optional<Terrain> terrain;
  std::optional<double> duration_minutes;

  friend bool operator==(const IncidentRecord&, const IncidentRecord&) = default;
};

// Throws ValidationError listing every violated field.
void validate(const IncidentRecord& record);

// AADT volume -> bin 1..5 (<8k, 8k-12k, 12k-24k, 24k-48k, >48k).
int aadt_bin_of(double aadt);

// ---------------------------------------------------------------------------
// Bands and temporal features

Band band_of(double duration_minutes);

struct Temporal {
  TimeOfDay tod;
  int dow;     // 0 = Monday .. 6 = Sunday
  int season;  // 1 = Winter (Dec-Feb) .. 4 = Autumn (Sep-Nov)
  int year;

  friend bool operator==(const Temporal&, const Temporal&) = default;
};

Temporal derive_temporal(const CivilTime& start);
TimeOfDay time_of_day(int hour);

// ---------------------------------------------------------------------------
// Feature sets and encoded matrices

enum class FeatureSetKind : std::uint8_t { FS1_Basic, FS2_Full, Custom };

struct FeatureSet {
  FeatureSetKind kind = FeatureSetKind::Custom;
  std::vector<std::string> columns;  // source feature names, in order

  static FeatureSet fs1();
  static FeatureSet fs2();
  static FeatureSet of(FeatureSetKind kind);
};

std::string_view feature_set_name(FeatureSetKind kind);
std::optional<FeatureSetKind> parse_feature_set(std::string_view text);

// Every source feature the encoder understands, in canonical order.
std::span<const std::string_view> known_source_features();

enum class ColumnKind : std::uint8_t { numeric, onehot, binary, ordinal };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::string source;

  friend bool operator==(const Column&, const Column&) = default;
};

// Rows are observations. Missing cells are NaN until imputation; a missing
// categorical sets its whole one-hot group to NaN.
struct FeatureMatrix {
  std::vector<Column> columns;
  Eigen::MatrixXd values;
  std::optional<Eigen::VectorXd> target;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  std::vector<std::string> column_names() const;
  std::optional<std::size_t> column_index(std::string_view name) const;

  FeatureMatrix select_rows(std::span<const Eigen::Index> rows) const;
  FeatureMatrix select_columns(std::span<const std::size_t> cols) const;
};

// Row-wise concatenation; schemas must agree.
FeatureMatrix vstack(const FeatureMatrix& top, const FeatureMatrix& bottom);

// Throws SchemaMismatch naming missing and extra columns.
void check_schema(std::span<const std::string> expected, std::span<const std::string> actual);

struct SourceEncoding {
  std::string feature;
  ColumnKind kind = ColumnKind::numeric;
  // One-hot only: category codes in column order and their labels.
  std::vector<int> codes;
  std::vector<std::string> labels;
};

// Category layout learned from a set of records; reused to encode
// prediction-time rows identically.
class EncoderSchema {
 public:
  EncoderSchema() = default;
  EncoderSchema(FeatureSet feature_set, std::vector<SourceEncoding> sources);

  static EncoderSchema fit(std::span<const IncidentRecord> records, const FeatureSet& feature_set);

  const FeatureSet& feature_set() const { return feature_set_; }
  const std::vector<SourceEncoding>& sources() const { return sources_; }
  std::vector<Column> columns() const;

 private:
  FeatureSet feature_set_;
  std::vector<SourceEncoding> sources_;
};

// Categories not present in the schema are encoded as missing and later
// receive the training mode.
FeatureMatrix encode(std::span<const IncidentRecord> records, const EncoderSchema& schema);
FeatureMatrix encode(std::span<const IncidentRecord> records, const FeatureSet& feature_set);

// Recovers category labels of one one-hot group (empty string for an all-zero
// or missing row).
std::vector<std::string> decode_onehot(const FeatureMatrix& matrix, std::string_view source);

Eigen::VectorXd duration_vector(std::span<const IncidentRecord> records);
std::vector<Band> band_vector(std::span<const IncidentRecord> records);

}  // namespace incidur
