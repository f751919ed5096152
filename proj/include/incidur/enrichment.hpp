#pragma once

// Route/measure lookup of road and traffic attributes, standing in for the
// linear referencing join.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "incidur/binary_io.hpp"
#include "incidur/domain.hpp"

namespace incidur {

inline constexpr double kMeasureBucket = 0.5;

struct EnrichmentRow {
  int aadt_bin = 3;
  double surface_width = 7.0;
  int surface_type = 0;
  Terrain terrain = Terrain::flat;
  std::array<int, 6> hourly_volume{};  // indexed by TimeOfDay

  friend bool operator==(const EnrichmentRow&, const EnrichmentRow&) = default;
};

class EnrichmentTable {
 public:
  using Key = std::pair<std::string, long>;

  static long bucket_of(double measure);

  void set(const std::string& route_id, long bucket, const EnrichmentRow& row);
  void set_default(const EnrichmentRow& row) { default_ = row; }
  const EnrichmentRow& default_row() const { return default_; }
  std::size_t size() const { return rows_.size(); }
  const std::map<Key, EnrichmentRow>& rows() const { return rows_; }

  // Falls back to the default row for unknown keys.
  const EnrichmentRow& lookup(const std::string& route_id, double measure) const;
  bool contains(const std::string& route_id, double measure) const;

  // Fills the absent road and traffic fields; present fields are kept.
  IncidentRecord enrich(IncidentRecord record) const;

  // Per key: modal categories, mean width, mean volume per time of day. The
  // default row aggregates every record the same way.
  static EnrichmentTable derive(std::span<const IncidentRecord> records);

  // CSV: route_id,bucket,aadt_bin,surface_width,surface_type,terrain,vol_<tod>...
  // A row with route_id "*" is the default.
  static EnrichmentTable read_csv(std::istream& in);
  static EnrichmentTable read_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;

  void save(BinaryWriter& w) const;
  static EnrichmentTable load(BinaryReader& r);

  friend bool operator==(const EnrichmentTable&, const EnrichmentTable&) = default;

 private:
  std::map<Key, EnrichmentRow> rows_;
  EnrichmentRow default_;
};

}  // namespace incidur
