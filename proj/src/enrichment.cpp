#include "incidur/enrichment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "incidur/error.hpp"
#include "incidur/incident_io.hpp"

namespace incidur {

namespace {

struct Accumulator {
  std::map<int, int> aadt;
  std::map<int, int> surface;
  std::map<int, int> terrain;
  double width_sum = 0.0;
  int width_n = 0;
  std::array<double, 6> vol_sum{};
  std::array<int, 6> vol_n{};

  void add(const IncidentRecord& r) {
    if (r.aadt_bin) ++aadt[*r.aadt_bin];
    if (r.surface_type) ++surface[*r.surface_type];
    if (r.terrain) ++terrain[static_cast<int>(*r.terrain)];
    if (r.surface_width) {
      width_sum += *r.surface_width;
      ++width_n;
    }
    if (r.hourly_volume) {
      const auto t = static_cast<std::size_t>(derive_temporal(r.start_time).tod);
      vol_sum[t] += *r.hourly_volume;
      ++vol_n[t];
    }
  }

  // Ties go to the smallest value.
  static int mode(const std::map<int, int>& counts, int fallback) {
    int best = fallback;
    int best_n = 0;
    for (const auto& [v, n] : counts)
      if (n > best_n) {
        best = v;
        best_n = n;
      }
    return best;
  }

  EnrichmentRow row(const EnrichmentRow& fallback) const {
    EnrichmentRow out;
    out.aadt_bin = mode(aadt, fallback.aadt_bin);
    out.surface_type = mode(surface, fallback.surface_type);
    out.terrain = static_cast<Terrain>(mode(terrain, static_cast<int>(fallback.terrain)));
    out.surface_width = width_n ? width_sum / width_n : fallback.surface_width;
    int total_n = 0;
    double total = 0.0;
    for (std::size_t t = 0; t < 6; ++t) {
      total += vol_sum[t];
      total_n += vol_n[t];
    }
    for (std::size_t t = 0; t < 6; ++t) {
      if (vol_n[t]) out.hourly_volume[t] = static_cast<int>(std::lround(vol_sum[t] / vol_n[t]));
      else if (total_n) out.hourly_volume[t] = static_cast<int>(std::lround(total / total_n));
      else out.hourly_volume[t] = fallback.hourly_volume[t];
    }
    return out;
  }
};

int parse_int(const std::string& s, const std::string& what, std::size_t line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty())
    throw DataError("enrichment line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  return v;
}

double parse_real(const std::string& s, const std::string& what, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v))
    throw DataError("enrichment line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

long EnrichmentTable::bucket_of(double measure) { return static_cast<long>(std::floor(measure / kMeasureBucket)); }

void EnrichmentTable::set(const std::string& route_id, long bucket, const EnrichmentRow& row) {
  rows_[{route_id, bucket}] = row;
}

const EnrichmentRow& EnrichmentTable::lookup(const std::string& route_id, double measure) const {
  const auto it = rows_.find({route_id, bucket_of(measure)});
  return it == rows_.end() ? default_ : it->second;
}

bool EnrichmentTable::contains(const std::string& route_id, double measure) const {
  return rows_.count({route_id, bucket_of(measure)}) > 0;
}

IncidentRecord EnrichmentTable::enrich(IncidentRecord r) const {
  const EnrichmentRow& row = lookup(r.route_id, r.measure);
  if (!r.aadt_bin) r.aadt_bin = row.aadt_bin;
  if (!r.surface_width) r.surface_width = row.surface_width;
  if (!r.surface_type) r.surface_type = row.surface_type;
  if (!r.terrain) r.terrain = row.terrain;
  if (!r.hourly_volume)
    r.hourly_volume = row.hourly_volume[static_cast<std::size_t>(derive_temporal(r.start_time).tod)];
  return r;
}

EnrichmentTable EnrichmentTable::derive(std::span<const IncidentRecord> records) {
  EnrichmentTable table;
  Accumulator all;
  std::map<Key, Accumulator> per_key;
  for (const auto& r : records) {
    all.add(r);
    per_key[{r.route_id, bucket_of(r.measure)}].add(r);
  }
  table.default_ = all.row(EnrichmentRow{});
  for (const auto& [key, acc] : per_key) table.rows_[key] = acc.row(table.default_);
  return table;
}

EnrichmentTable EnrichmentTable::read_csv(std::istream& in) {
  EnrichmentTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("route_id,", 0) == 0) continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 12)
      throw DataError("enrichment line " + std::to_string(line_no) + ": expected 12 fields, got " +
                      std::to_string(f.size()));
    EnrichmentRow row;
    row.aadt_bin = parse_int(f[2], "aadt_bin", line_no);
    row.surface_width = parse_real(f[3], "surface_width", line_no);
    row.surface_type = parse_int(f[4], "surface_type", line_no);
    const auto terrain = parse_enum<Terrain>(f[5]);
    if (!terrain) throw DataError("enrichment line " + std::to_string(line_no) + ": bad terrain '" + f[5] + "'");
    row.terrain = *terrain;
    for (std::size_t t = 0; t < 6; ++t) row.hourly_volume[t] = parse_int(f[6 + t], "hourly volume", line_no);
    if (row.aadt_bin < 1 || row.aadt_bin > 5 || !(row.surface_width > 0.0))
      throw DataError("enrichment line " + std::to_string(line_no) + ": value out of range");
    if (f[0] == "*") {
      table.default_ = row;
    } else {
      table.rows_[{f[0], parse_int(f[1], "bucket", line_no)}] = row;
    }
  }
  return table;
}

EnrichmentTable EnrichmentTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open enrichment table " + path.string());
  return read_csv(in);
}

void EnrichmentTable::write_csv(std::ostream& out) const {
  out << "route_id,bucket,aadt_bin,surface_width,surface_type,terrain";
  for (auto name : enum_names<TimeOfDay>()) out << ",vol_" << name;
  out << '\n';
  const auto emit = [&](const std::string& route, long bucket, const EnrichmentRow& row) {
    out << csv_escape(route) << ',' << bucket << ',' << row.aadt_bin << ',' << format_double(row.surface_width) << ','
        << row.surface_type << ',' << to_string(row.terrain);
    for (int v : row.hourly_volume) out << ',' << v;
    out << '\n';
  };
  emit("*", 0, default_);
  for (const auto& [key, row] : rows_) emit(key.first, key.second, row);
}

void EnrichmentTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write enrichment table " + path.string());
  write_csv(out);
}

namespace {

void save_row(BinaryWriter& w, const EnrichmentRow& row) {
  w.i32(row.aadt_bin);
  w.f64(row.surface_width);
  w.i32(row.surface_type);
  w.u8(static_cast<std::uint8_t>(row.terrain));
  for (int v : row.hourly_volume) w.i32(v);
}

EnrichmentRow load_row(BinaryReader& r) {
  EnrichmentRow row;
  row.aadt_bin = r.i32();
  row.surface_width = r.f64();
  row.surface_type = r.i32();
  const auto t = r.u8();
  if (t > static_cast<std::uint8_t>(Terrain::hilly)) throw ArtifactError("enrichment section malformed");
  row.terrain = static_cast<Terrain>(t);
  for (int& v : row.hourly_volume) v = r.i32();
  return row;
}

}  // namespace

void EnrichmentTable::save(BinaryWriter& w) const {
  save_row(w, default_);
  w.u64(rows_.size());
  for (const auto& [key, row] : rows_) {
    w.str(key.first);
    w.i64(key.second);
    save_row(w, row);
  }
}

EnrichmentTable EnrichmentTable::load(BinaryReader& r) {
  EnrichmentTable t;
  t.default_ = load_row(r);
  const std::size_t n = r.count(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::string route = r.str();
    const long bucket = static_cast<long>(r.i64());
    t.rows_[{std::move(route), bucket}] = load_row(r);
  }
  return t;
}

}  // namespace incidur
