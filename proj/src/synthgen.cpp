#include "incidur/synthgen.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>

#include "incidur/error.hpp"
#include "incidur/incident_io.hpp"
#include "incidur/random.hpp"

namespace incidur {

void GeneratorConfig::validate() const {
  if (n_records < 1) throw InvalidArgument("n_records must be positive");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) throw InvalidArgument("signal_strength must be in [0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(mu)) throw InvalidArgument("log-normal parameters must be finite, sigma > 0");
  if (!(blank_rate >= 0.0 && blank_rate < 1.0)) throw InvalidArgument("blank_rate must be in [0, 1)");
  if (n_routes < 1) throw InvalidArgument("n_routes must be positive");
  if (!(min_minutes > 0.0 && min_minutes < max_minutes)) throw InvalidArgument("duration clip range is invalid");
}

double EffectTable::get(const std::string& name) const {
  for (const auto& [k, v] : entries)
    if (k == name) return v;
  return 0.0;
}

const EffectTable& default_effects() {
  // Responder effects follow the direction of the responder medians (tow,
  // police, DOT and EMS presence roughly double the duration); the AADT effect
  // is deliberately non-monotone.
  static const EffectTable table{{
      {"responder.tow", 0.80},
      {"responder.police", 0.60},
      {"responder.dot", 0.60},
      {"responder.ems", 0.55},
      {"responder.hh", 0.30},
      {"responder.dps", 0.20},
      {"fatalities", 1.20},
      {"injuries", 0.40},
      {"trucks.per_category", 0.25},
      {"vehicles.per_vehicle", 0.08},
      {"event_type.crash1", 0.0},
      {"event_type.crash2", 0.15},
      {"event_type.crash3", 0.35},
      {"event_type.debris", -0.60},
      {"only_shoulders_closed", -0.30},
      {"lanes.per_lane", -0.05},
      {"detection.automated", -0.15},
      {"detection.cameras", -0.15},
      {"tod.night", 0.20},
      {"tod.evening_rush", -0.10},
      {"terrain.hilly", 0.10},
      {"terrain.rolly", 0.05},
      {"aadt_bin.1", 0.30},
      {"aadt_bin.2", -0.10},
      {"aadt_bin.3", 0.25},
      {"aadt_bin.4", -0.20},
      {"aadt_bin.5", -0.05},
  }};
  return table;
}

namespace {

struct Route {
  std::string id;
  double length;
  // Attributes change every 5 measure units.
  std::vector<EnrichmentRow> segments;
};

constexpr double kSegmentLength = 5.0;

std::vector<Route> make_routes(const GeneratorConfig& cfg, Rng& rng) {
  std::vector<Route> routes;
  for (int i = 0; i < cfg.n_routes; ++i) {
    Route r;
    char name[16];
    std::snprintf(name, sizeof name, "R%02d", i + 1);
    r.id = name;
    r.length = 20.0 + 40.0 * uniform01(rng);
    const int base_aadt = 1 + static_cast<int>(uniform_index(rng, 5));
    const auto base_terrain = static_cast<Terrain>(categorical(rng, {0.55, 0.3, 0.15}));
    const int n_seg = static_cast<int>(std::ceil(r.length / kSegmentLength));
    for (int s = 0; s < n_seg; ++s) {
      EnrichmentRow row;
      row.aadt_bin = std::clamp(base_aadt + static_cast<int>(categorical(rng, {0.15, 0.7, 0.15})) - 1, 1, 5);
      row.terrain = bernoulli(rng, 0.8) ? base_terrain : static_cast<Terrain>(uniform_index(rng, 3));
      row.surface_type = static_cast<int>(categorical(rng, {0.6, 0.25, 0.1, 0.05}));
      row.surface_width = std::round((6.0 + 1.2 * row.aadt_bin + 2.0 * uniform01(rng)) * 10.0) / 10.0;
      // Rough hourly profile scaled by traffic level.
      static constexpr std::array<double, 6> shape{0.075, 0.06, 0.065, 0.085, 0.05, 0.02};
      const double aadt = 4000.0 * std::pow(2.0, row.aadt_bin) * (0.8 + 0.4 * uniform01(rng));
      for (std::size_t t = 0; t < 6; ++t) row.hourly_volume[t] = static_cast<int>(std::lround(aadt * shape[t]));
      r.segments.push_back(row);
    }
    routes.push_back(std::move(r));
  }
  return routes;
}

CivilTime random_time(Rng& rng) {
  using namespace std::chrono;
  const int year = 2017 + static_cast<int>(uniform_index(rng, 3));
  const sys_days first{std::chrono::year{year} / January / 1};
  const sys_days last{std::chrono::year{year} / December / 31};
  const auto span = static_cast<std::uint64_t>((last - first).count() + 1);
  const year_month_day ymd{first + days{static_cast<int>(uniform_index(rng, span))}};
  // More incidents in daytime hours.
  static const std::vector<double> hour_weights{1, 1, 1, 1, 1, 2, 3, 5, 6, 5, 4, 4, 4, 4, 5, 6, 7, 7, 5, 4, 3, 2, 2, 1};
  CivilTime t;
  t.year = year;
  t.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  t.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  t.hour = static_cast<int>(categorical(rng, hour_weights));
  t.minute = static_cast<int>(uniform_index(rng, 60));
  return t;
}

double effect_sum(const IncidentRecord& r, const EffectTable& e) {
  double s = 0.0;
  if (r.responders) {
    for (auto resp : {Responder::police, Responder::tow, Responder::dot, Responder::dps, Responder::ems, Responder::hh})
      if (r.responders->contains(resp)) s += e.get("responder." + std::string(to_string(resp)));
  }
  if (r.fatalities) s += e.get("fatalities");
  if (r.injuries) s += e.get("injuries");
  if (r.trucks) s += *r.trucks * e.get("trucks.per_category");
  if (r.vehicles) s += *r.vehicles * e.get("vehicles.per_vehicle");
  s += e.get("event_type." + std::string(to_string(r.event_type)));
  if (r.only_shoulders_closed) s += e.get("only_shoulders_closed");
  if (r.lanes) s += *r.lanes * e.get("lanes.per_lane");
  if (r.detection_method) s += e.get("detection." + std::string(to_string(*r.detection_method)));
  s += e.get("tod." + std::string(to_string(derive_temporal(r.start_time).tod)));
  if (r.terrain) s += e.get("terrain." + std::string(to_string(*r.terrain)));
  if (r.aadt_bin) s += e.get("aadt_bin." + std::to_string(*r.aadt_bin));
  return s;
}

}  // namespace

GeneratedData generate(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng route_rng(mix_seed(cfg.seed, 1));
  Rng rng(mix_seed(cfg.seed, 2));
  Rng noise_rng(mix_seed(cfg.seed, 3));
  Rng blank_rng(mix_seed(cfg.seed, 4));
  const auto routes = make_routes(cfg, route_rng);
  const EffectTable& effects = default_effects();

  GeneratedData out;
  for (const auto& route : routes) {
    for (std::size_t s = 0; s < route.segments.size(); ++s) {
      const long first = EnrichmentTable::bucket_of(static_cast<double>(s) * kSegmentLength);
      const long last = EnrichmentTable::bucket_of(std::min(route.length, (s + 1.0) * kSegmentLength) - 1e-9);
      for (long b = first; b <= last; ++b) out.enrichment.set(route.id, b, route.segments[s]);
    }
  }

  std::vector<IncidentRecord>& records = out.records;
  records.reserve(static_cast<std::size_t>(cfg.n_records));
  for (int i = 0; i < cfg.n_records; ++i) {
    IncidentRecord r;
    char id[24];
    std::snprintf(id, sizeof id, "INC%06d", i + 1);
    r.id = id;
    r.start_time = random_time(rng);
    r.direction = static_cast<Direction>(uniform_index(rng, 4));
    r.county_region = static_cast<CountyRegion>(categorical(rng, {0.2, 0.15, 0.35, 0.15, 0.15}));
    r.city_number = static_cast<int>(categorical(rng, {0.3, 0.15, 0.12, 0.1, 0.08, 0.07, 0.06, 0.05, 0.04, 0.03}));
    r.event_type = static_cast<EventType>(categorical(rng, {0.45, 0.3, 0.1, 0.15}));
    r.lanes = 1 + static_cast<int>(categorical(rng, {0.45, 0.35, 0.15, 0.05}));
    r.only_shoulders_closed = bernoulli(rng, 0.3);
    int vehicles = 0;
    switch (r.event_type) {
      case EventType::crash1:
        vehicles = 1;
        break;
      case EventType::crash2:
        vehicles = 2;
        break;
      case EventType::crash3:
        vehicles = 3;
        break;
      case EventType::debris:
        vehicles = bernoulli(rng, 0.8) ? 0 : 1;
        break;
    }
    r.vehicles = vehicles;
    r.trucks = std::min(vehicles, static_cast<int>(categorical(rng, {0.8, 0.15, 0.04, 0.01})));
    r.injuries = bernoulli(rng, r.event_type == EventType::crash3 ? 0.4 : r.event_type == EventType::debris ? 0.03 : 0.2);
    r.fatalities = bernoulli(rng, r.event_type == EventType::crash3 ? 0.04 : r.event_type == EventType::debris ? 0.0 : 0.01);
    r.detection_method = static_cast<DetectionMethod>(categorical(rng, {0.3, 0.25, 0.1, 0.15, 0.15, 0.05}));

    // Responders depend only mildly on the basic features.
    ResponderSet resp;
    const bool multi = vehicles >= 2;
    if (bernoulli(rng, multi ? 0.32 : 0.19)) resp.insert(Responder::tow);
    if (bernoulli(rng, r.injuries ? 0.45 : 0.30)) resp.insert(Responder::police);
    if (bernoulli(rng, 0.09)) resp.insert(Responder::dot);
    if (bernoulli(rng, 0.05)) resp.insert(Responder::dps);
    if (bernoulli(rng, r.injuries ? 0.30 : 0.08)) resp.insert(Responder::ems);
    if (bernoulli(rng, 0.49)) resp.insert(Responder::hh);
    r.responders = resp;

    const Route& route = routes[uniform_index(rng, routes.size())];
    r.route_id = route.id;
    r.measure = std::floor(uniform01(rng) * route.length * 1000.0) / 1000.0;
    r = out.enrichment.enrich(r);
    records.push_back(std::move(r));
  }

  // Centre the effects on their sample mean and give the noise the variance
  // that is left.
  std::vector<double> eff(records.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    eff[i] = cfg.signal_strength * effect_sum(records[i], effects);
    mean += eff[i];
  }
  mean /= static_cast<double>(records.size());
  double var = 0.0;
  for (double e : eff) var += (e - mean) * (e - mean);
  var /= static_cast<double>(records.size());
  const double total = cfg.sigma * cfg.sigma;
  if (var >= total) throw InvalidArgument("feature effects exceed the target log-variance; lower signal_strength");
  out.effect_variance = var;
  out.residual_sigma = std::sqrt(total - var);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double log_d = cfg.mu + (eff[i] - mean) + out.residual_sigma * standard_normal(noise_rng);
    records[i].duration_minutes = std::clamp(std::round(std::exp(log_d)), cfg.min_minutes, cfg.max_minutes);
  }

  // Blank optional fields after the durations are fixed.
  for (auto& r : records) {
    const auto blank = [&](auto& field) {
      if (bernoulli(blank_rng, cfg.blank_rate)) field.reset();
    };
    blank(r.lanes);
    blank(r.vehicles);
    blank(r.trucks);
    blank(r.detection_method);
    blank(r.responders);
    blank(r.aadt_bin);
    blank(r.hourly_volume);
    blank(r.surface_width);
    blank(r.surface_type);
    blank(r.terrain);
  }
  return out;
}

void write_manifest(std::ostream& out, const GeneratorConfig& cfg, const GeneratedData& data) {
  out << "n_records = " << cfg.n_records << '\n'
      << "seed = " << cfg.seed << '\n'
      << "signal_strength = " << format_double(cfg.signal_strength) << '\n'
      << "lognormal_mu = " << format_double(cfg.mu) << '\n'
      << "lognormal_sigma = " << format_double(cfg.sigma) << '\n'
      << "blank_rate = " << format_double(cfg.blank_rate) << '\n'
      << "clip_minutes = " << format_double(cfg.min_minutes) << ',' << format_double(cfg.max_minutes) << '\n'
      << "effect_variance = " << format_double(data.effect_variance) << '\n'
      << "residual_sigma = " << format_double(data.residual_sigma) << '\n';
  for (const auto& [name, value] : default_effects().entries)
    out << "effect." << name << " = " << format_double(cfg.signal_strength * value) << '\n';
}

}  // namespace incidur
