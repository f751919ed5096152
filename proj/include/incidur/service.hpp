#pragma once

// HTTP prediction service: POST /v1/predict, GET /v1/health, GET /v1/schema.
// Handlers are plain functions of the request body so they can be tested
// without a socket.

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "incidur/incident_io.hpp"
#include "incidur/pipeline.hpp"

namespace incidur {

struct ServiceConfig {
  // Below this predicted duration a detour costs more than it saves.
  double detour_threshold_minutes = 30.0;
  int threads = 8;
};

std::vector<std::string> recommended_actions(const Prediction& p, double detour_threshold_minutes);

// Request JSON object -> canonical field text. Strings pass through, numbers
// and booleans are formatted, responder arrays are joined with '|' and null
// means missing. Throws ValidationError naming fields of unusable types.
FieldMap fields_from_json(std::string_view body, std::string* request_id);

// The /v1/predict response body; an empty request id is left out.
std::string prediction_json(const Prediction& p, const std::vector<std::string>& actions,
                            const std::string& request_id);

// JSON text for /v1/schema: every accepted field with its type and, for
// enumerations, the allowed values.
std::string schema_json();

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class PredictionService {
 public:
  explicit PredictionService(ServiceConfig config = {});
  ~PredictionService();
  PredictionService(const PredictionService&) = delete;
  PredictionService& operator=(const PredictionService&) = delete;

  // Swaps the served model; requests in flight keep the one they started with.
  void set_model(std::shared_ptr<const FrameworkModel> model);
  std::shared_ptr<const FrameworkModel> model() const;

  HttpResponse predict(std::string_view body, std::string_view content_type) const;
  HttpResponse health() const;
  HttpResponse schema() const;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Http;
  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::shared_ptr<const FrameworkModel> model_;
  std::unique_ptr<Http> http_;
};

}  // namespace incidur
