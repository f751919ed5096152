#include "incidur/service.hpp"

#include <atomic>
#include <iostream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "incidur/error.hpp"

namespace incidur {

using nlohmann::json;

namespace {

std::string error_body(const std::string& message, const std::string& request_id = {}) {
  json j{{"error", message}};
  if (!request_id.empty()) j["request_id"] = request_id;
  return j.dump();
}

bool is_json_content_type(std::string_view ct) {
  const auto semi = ct.find(';');
  std::string_view media = ct.substr(0, semi);
  while (!media.empty() && media.back() == ' ') media.remove_suffix(1);
  return media == "application/json";
}

// Opaque ids for 500 responses and requests that do not carry one.
std::string next_id(const char* prefix) {
  static const std::uint64_t nonce = std::random_device{}();
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream os;
  os << prefix << std::hex << (nonce & 0xffffff) << '-' << counter.fetch_add(1);
  return os.str();
}

std::string field_type(std::string_view name) {
  if (name == "start_time") return "datetime";
  if (name == "only_shoulders_closed" || name == "injuries" || name == "fatalities") return "boolean";
  if (name == "responders") return "set";
  if (name == "measure" || name == "surface_width" || name == "duration_minutes") return "number";
  if (name == "city_number" || name == "lanes" || name == "aadt_bin" || name == "hourly_volume" ||
      name == "surface_type")
    return "integer";
  if (name == "id" || name == "route_id") return "string";
  return "enum";
}

template <typename E>
json names_of() {
  json out = json::array();
  for (auto n : enum_names<E>()) out.push_back(std::string(n));
  return out;
}

json enum_values(std::string_view name) {
  if (name == "direction") return names_of<Direction>();
  if (name == "county_region") return names_of<CountyRegion>();
  if (name == "event_type") return names_of<EventType>();
  if (name == "detection_method") return names_of<DetectionMethod>();
  if (name == "responders") return names_of<Responder>();
  if (name == "terrain") return names_of<Terrain>();
  if (name == "vehicles" || name == "trucks") return json::array({"0", "1", "2", "3+"});
  return nullptr;
}

}  // namespace

std::string prediction_json(const Prediction& p, const std::vector<std::string>& actions,
                            const std::string& request_id) {
  json probs = json::object();
  for (std::size_t b = 0; b < 3; ++b) probs[std::string(enum_names<Band>()[b])] = p.probabilities[b];
  json j;
  if (!request_id.empty()) j["request_id"] = request_id;
  j["band"] = std::string(to_string(p.band));
  j["band_probabilities"] = probs;
  j["duration_minutes"] = p.duration_minutes;
  j["model_version"] = p.model_version;
  j["feature_set_used"] = p.feature_set_used == FeatureSetKind::FS2_Full ? "FS2" : "FS1";
  j["recommended_actions"] = actions;
  return j.dump();
}

std::vector<std::string> recommended_actions(const Prediction& p, double detour_threshold_minutes) {
  std::vector<std::string> out;
  switch (p.band) {
    case Band::Long:
      if (p.duration_minutes >= detour_threshold_minutes) out.emplace_back("evaluate_detour");
      out.emplace_back("dispatch_helper");
      break;
    case Band::Medium:
      out.emplace_back("dispatch_helper");
      out.emplace_back("traveler_warning");
      break;
    case Band::Short:
      out.emplace_back("monitor");
      break;
  }
  return out;
}

FieldMap fields_from_json(std::string_view body, std::string* request_id) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  FieldMap fields;
  std::vector<std::string> bad;
  for (const auto& [key, value] : j.items()) {
    if (key == "request_id") {
      if (!value.is_string()) {
        bad.push_back(key);
        continue;
      }
      if (request_id) *request_id = value.get<std::string>();
      continue;
    }
    if (value.is_null()) continue;
    if (value.is_string()) {
      fields[key] = value.get<std::string>();
    } else if (value.is_boolean()) {
      fields[key] = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_integer()) {
      fields[key] = value.dump();
    } else if (value.is_number_float()) {
      fields[key] = format_double(value.get<double>());
    } else if (value.is_array() && key == "responders") {
      std::string joined;
      bool ok = true;
      for (const auto& v : value) {
        if (!v.is_string()) ok = false;
        else joined += (joined.empty() ? "" : "|") + v.get<std::string>();
      }
      if (!ok) bad.push_back(key);
      else fields[key] = joined.empty() ? "none" : joined;
    } else {
      bad.push_back(key);
    }
  }
  if (!bad.empty()) {
    std::string msg = "unsupported value type for:";
    for (const auto& b : bad) msg += " " + b;
    throw ValidationError(msg);
  }
  return fields;
}

std::string schema_json() {
  json fields = json::array();
  const auto required = required_incident_fields();
  for (auto name : incident_fields()) {
    if (name == "duration_minutes") continue;  // the label, not an input
    json f{{"name", std::string(name)},
           {"type", field_type(name)},
           {"required", std::find(required.begin(), required.end(), name) != required.end()}};
    if (json values = enum_values(name); !values.is_null()) f["values"] = values;
    fields.push_back(std::move(f));
  }
  json sets = json::object();
  sets["FS1"] = FeatureSet::fs1().columns;
  sets["FS2"] = FeatureSet::fs2().columns;
  return json{{"fields", fields}, {"feature_sets", sets}, {"bands", names_of<Band>()}}.dump();
}

// ---------------------------------------------------------------------------

struct PredictionService::Http {
  httplib::Server server;
};

PredictionService::PredictionService(ServiceConfig config) : config_(config), http_(std::make_unique<Http>()) {
  const int threads = std::max(1, config_.threads);
  http_->server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  const auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  http_->server.Post("/v1/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, predict(req.body, req.get_header_value("Content-Type")));
  });
  http_->server.Get("/v1/health",
                    [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  http_->server.Get("/v1/schema",
                    [this, send](const httplib::Request&, httplib::Response& res) { send(res, schema()); });
  http_->server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(error_body(res.status == 404 ? "not found" : "request failed"), "application/json");
  });
}

PredictionService::~PredictionService() { stop(); }

void PredictionService::set_model(std::shared_ptr<const FrameworkModel> model) {
  std::lock_guard lock(mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const FrameworkModel> PredictionService::model() const {
  std::lock_guard lock(mutex_);
  return model_;
}

HttpResponse PredictionService::predict(std::string_view body, std::string_view content_type) const {
  if (!is_json_content_type(content_type))
    return {415, error_body("content type must be application/json, got '" + std::string(content_type) + "'")};
  const auto m = model();
  if (!m) return {503, error_body("no model loaded")};
  std::string request_id;
  try {
    const FieldMap fields = fields_from_json(body, &request_id);
    if (request_id.empty()) request_id = next_id("req-");
    const IncidentRecord record = record_from_fields(fields);
    const Prediction p = predict_incident(*m, record);
    return {200, prediction_json(p, recommended_actions(p, config_.detour_threshold_minutes), request_id)};
  } catch (const DataError& e) {
    return {400, error_body(e.what(), request_id)};
  } catch (const std::exception& e) {
    const std::string id = next_id("err-");
    std::cerr << "incidur: error " << id << ": " << e.what() << '\n';
    return {500, error_body("internal error; reference " + id, request_id)};
  }
}

HttpResponse PredictionService::health() const {
  const auto m = model();
  if (!m) return {503, json{{"status", "not_ready"}}.dump()};
  return {200, json{{"status", "ready"}, {"model_version", m->version}}.dump()};
}

HttpResponse PredictionService::schema() const { return {200, schema_json()}; }

int PredictionService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = http_->server.bind_to_any_port(host);
    if (bound < 0) throw DataError("cannot bind " + host);
    return bound;
  }
  if (!http_->server.bind_to_port(host, port)) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void PredictionService::listen() { http_->server.listen_after_bind(); }

void PredictionService::stop() {
  if (http_ && http_->server.is_running()) http_->server.stop();
}

}  // namespace incidur
