#pragma once

// Helpers shared by the unit and acceptance tests.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "incidur/domain.hpp"
#include "incidur/pipeline.hpp"
#include "incidur/random.hpp"
#include "incidur/synthgen.hpp"

namespace incidur::testing {

inline IncidentRecord basic_record(std::string id = "r1", double minutes = 20.0) {
  IncidentRecord r;
  r.id = std::move(id);
  r.start_time = CivilTime{2019, 3, 12, 8, 15, 0};
  r.direction = Direction::E;
  r.county_region = CountyRegion::Central;
  r.city_number = 3;
  r.event_type = EventType::crash2;
  r.lanes = 1;
  r.vehicles = 2;
  r.trucks = 0;
  r.detection_method = DetectionMethod::police;
  r.route_id = "I-80";
  r.measure = 12.3;
  r.duration_minutes = minutes;
  return r;
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = standard_normal(rng);
  return x;
}

inline FeatureMatrix numeric_matrix(const Eigen::MatrixXd& x) {
  FeatureMatrix m;
  for (Eigen::Index j = 0; j < x.cols(); ++j) m.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, "x" + std::to_string(j)});
  m.values = x;
  return m;
}

// Small models so whole-pipeline tests stay fast.
inline PipelineConfig fast_pipeline_config() {
  PipelineConfig c;
  for (ModelParams* p : {&c.classifier_params, &c.regressor_params}) {
    p->forest.n_estimators = 15;
    p->gbm.n_rounds = 25;
  }
  return c;
}

inline GeneratedData small_dataset(int n = 1200, std::uint64_t seed = 11) {
  GeneratorConfig g;
  g.n_records = n;
  g.seed = seed;
  return generate(g);
}

// One trained model shared by the tests that only need to score.
struct SharedModel {
  GeneratedData data;
  TrainingResult training;

  static const SharedModel& get() {
    static const SharedModel shared = [] {
      SharedModel s;
      s.data = small_dataset();
      s.training = train_framework(s.data.records, fast_pipeline_config(), &s.data.enrichment);
      return s;
    }();
    return shared;
  }
};

}  // namespace incidur::testing
