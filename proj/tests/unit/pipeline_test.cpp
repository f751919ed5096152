#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>

#include "incidur/error.hpp"
#include "incidur/pipeline.hpp"
#include "support.hpp"

using namespace incidur;
using incidur::testing::SharedModel;
using incidur::testing::basic_record;
using incidur::testing::fast_pipeline_config;
using incidur::testing::small_dataset;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Pipeline, PredictionsRouteThroughPredictedBand) {
  const auto& shared = SharedModel::get();
  const FrameworkModel& model = shared.training.model;
  const auto& test = shared.training.split.test;
  const auto preds = predict_incidents(model, test);
  ASSERT_EQ(preds.size(), test.size());

  for (FeatureSetKind kind : {FeatureSetKind::FS1_Basic, FeatureSetKind::FS2_Full}) {
    std::vector<IncidentRecord> group;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (&model.stage_for(test[i]) == model.stage(kind)) {
        group.push_back(test[i]);
        where.push_back(i);
      }
    ASSERT_FALSE(group.empty()) << feature_set_name(kind);
    const StageScores s = score_stage(model, *model.stage(kind), group);
    for (std::size_t k = 0; k < group.size(); ++k) {
      const Prediction& p = preds[where[k]];
      const auto row = static_cast<Eigen::Index>(k);
      EXPECT_EQ(p.feature_set_used, kind);
      EXPECT_EQ(static_cast<int>(p.band), s.predicted[k]);
      Eigen::Index best = 0;
      s.probabilities.row(row).maxCoeff(&best);
      EXPECT_EQ(static_cast<Eigen::Index>(p.band), best);
      // The duration is the predicted band's regressor, nothing else.
      EXPECT_EQ(p.duration_minutes, s.minutes(row, best));
      EXPECT_GE(p.duration_minutes, 1.0);
      EXPECT_NEAR(s.probabilities.row(row).sum(), 1.0, 1e-9);
    }
  }

  // Responder details decide the stage.
  IncidentRecord r = basic_record();
  EXPECT_EQ(predict_incident(model, r).feature_set_used, FeatureSetKind::FS1_Basic);
  r.responders = ResponderSet{Responder::tow};
  EXPECT_EQ(predict_incident(model, r).feature_set_used, FeatureSetKind::FS2_Full);
  EXPECT_EQ(predict_incident(model, test[3]).duration_minutes, preds[3].duration_minutes);
  EXPECT_EQ(predict_incident(model, r).model_version, "incidur-1");
}

TEST(Pipeline, EvaluationIsConsistent) {
  const auto& shared = SharedModel::get();
  const FrameworkModel& model = shared.training.model;
  const auto& test = shared.training.split.test;
  const FrameworkEvaluation e = evaluate_framework(model, test);
  EXPECT_EQ(e.confusion.total(), static_cast<std::int64_t>(test.size()));

  std::size_t n = 0;
  for (const auto& b : e.routed_by_truth.per_band) n += b ? b->n : 0;
  EXPECT_EQ(n, test.size());
  EXPECT_EQ(e.routed_by_prediction.overall.n, test.size());

  // Scores are on original minutes.
  std::vector<double> obs, pred;
  const auto preds = predict_incidents(model, test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    obs.push_back(*test[i].duration_minutes);
    pred.push_back(preds[i].duration_minutes);
  }
  EXPECT_NEAR(e.routed_by_prediction.overall.mae, regression_metrics(pred, obs).mae, 1e-9);

  // Beats the training median as a constant prediction.
  std::vector<double> train_minutes;
  for (const auto& r : shared.training.split.train) train_minutes.push_back(*r.duration_minutes);
  const std::vector<double> base(obs.size(), median(train_minutes));
  EXPECT_LT(e.routed_by_prediction.overall.mae, regression_metrics(base, obs).mae);
  // Misrouting only costs.
  EXPECT_LE(e.routed_by_truth.overall.mae, e.routed_by_prediction.overall.mae);
  EXPECT_GT(e.auc.macro, 0.7);

  const KeyValues kv = e.to_report();
  EXPECT_TRUE(kv.get("auc_macro"));
  EXPECT_TRUE(kv.get("confusion.short.short"));

  // Forcing FS1 scores every record with the basic stage.
  EXPECT_NO_THROW(evaluate_framework(model, test, FeatureSetKind::FS1_Basic));
  std::vector<IncidentRecord> unlabelled{basic_record()};
  unlabelled[0].duration_minutes.reset();
  EXPECT_THROW(evaluate_framework(model, unlabelled), DataError);
}

TEST(Pipeline, TrainingReport) {
  const auto& shared = SharedModel::get();
  const KeyValues& rep = shared.training.report;
  const auto& s = shared.training.split;
  EXPECT_EQ(s.train.size() + s.test.size() + s.validation.size(), shared.data.records.size());
  EXPECT_EQ(rep.get("split.train"), std::to_string(s.train.size()));
  EXPECT_EQ(rep.get("fs2.classifier"), "rf+extra_trees+gbm_leaf");
  EXPECT_EQ(rep.get("fs2.regressor.long"), "gbm_level");
  EXPECT_TRUE(rep.get("test.auc_macro"));
  EXPECT_TRUE(rep.get("validation.auc_macro"));
  EXPECT_LT(std::abs(std::stod(*rep.get("skewness.after"))), std::abs(std::stod(*rep.get("skewness.before"))));
}

TEST(Pipeline, ArtifactRoundTripIsExact) {
  const auto& shared = SharedModel::get();
  const FrameworkModel& model = shared.training.model;
  const std::string bytes = serialize_model(model);
  EXPECT_EQ(serialize_model(model), bytes);
  const FrameworkModel back = deserialize_model(bytes);
  EXPECT_EQ(serialize_model(back), bytes);

  GeneratorConfig g;
  g.n_records = 1000;
  g.seed = 99;
  const auto records = generate(g).records;
  const auto a = predict_incidents(model, records), b = predict_incidents(back, records);
  for (std::size_t i = 0; i < records.size(); ++i) {
    ASSERT_TRUE(same_bits(a[i].duration_minutes, b[i].duration_minutes)) << i;
    ASSERT_EQ(a[i].band, b[i].band);
    for (std::size_t c = 0; c < 3; ++c) ASSERT_TRUE(same_bits(a[i].probabilities[c], b[i].probabilities[c]));
  }

  const auto path = std::filesystem::temp_directory_path() / "incidur_pipeline_test.model";
  save_model(model, path);
  EXPECT_EQ(serialize_model(load_model(path)), bytes);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), DataError);
}

TEST(Pipeline, ArtifactCorruptionDetected) {
  const std::string bytes = serialize_model(SharedModel::get().training.model);
  // Header: 8 magic bytes, u32 version, u64 checksum, u64 length.
  std::string tampered = bytes;
  tampered[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize_model(tampered), ChecksumMismatch);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), ChecksumMismatch);

  std::string old = bytes;
  old[8] = 0;  // version 0
  try {
    deserialize_model(old);
    FAIL() << "old version accepted";
  } catch (const UnsupportedVersion& e) {
    EXPECT_NE(std::string(e.what()).find("version 0"), std::string::npos) << e.what();
  }
  std::string newer = bytes;
  newer[8] = 2;
  EXPECT_THROW(deserialize_model(newer), UnsupportedVersion);

  EXPECT_THROW(deserialize_model("not a model"), ArtifactError);
  EXPECT_THROW(deserialize_model(""), ArtifactError);
}

TEST(Pipeline, DeterministicFs1OnlyTraining) {
  const auto data = small_dataset(700, 5);
  PipelineConfig c = fast_pipeline_config();
  c.feature_set = FeatureSetKind::FS1_Basic;
  const TrainingResult a = train_framework(data.records, c, &data.enrichment);
  const TrainingResult b = train_framework(data.records, c, &data.enrichment);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));

  ASSERT_EQ(a.model.stages.size(), 1u);
  EXPECT_EQ(a.model.stages[0].kind, FeatureSetKind::FS1_Basic);
  EXPECT_EQ(a.model.stage(FeatureSetKind::FS2_Full), nullptr);
  IncidentRecord r = basic_record();
  r.responders = ResponderSet{Responder::tow};
  EXPECT_EQ(predict_incident(a.model, r).feature_set_used, FeatureSetKind::FS1_Basic);
  EXPECT_THROW(evaluate_framework(a.model, a.split.test, FeatureSetKind::FS2_Full), InvalidArgument);

  // Without a table one is derived from the training split.
  const TrainingResult d = train_framework(data.records, c);
  EXPECT_GT(d.model.enrichment.size(), 0u);
}

TEST(Pipeline, TrainingRejectsUnusableInput) {
  const auto data = small_dataset(600, 3);
  const std::span<const IncidentRecord> all(data.records);
  PipelineConfig c = fast_pipeline_config();
  EXPECT_THROW(train_framework(all.first(400), c), DataError);

  std::vector<IncidentRecord> no_long;
  for (const auto& r : data.records)
    if (band_of(*r.duration_minutes) != Band::Long) no_long.push_back(r);
  while (no_long.size() < 600) no_long.push_back(no_long[no_long.size() % 50]);
  try {
    train_framework(no_long, c);
    FAIL() << "missing band accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("long"), std::string::npos) << e.what();
  }

  std::vector<IncidentRecord> unlabelled(data.records);
  unlabelled[10].duration_minutes.reset();
  EXPECT_THROW(train_framework(unlabelled, c), DataError);

  c.band_models[1] = {"logistic"};
  EXPECT_THROW(train_framework(data.records, c), InvalidArgument);
  c = fast_pipeline_config();
  c.classifier_models = {"huber"};
  EXPECT_THROW(train_framework(data.records, c), InvalidArgument);
}

TEST(BandMetrics, PartitionsByTrueBand) {
  const std::vector<double> pred{10, 50, 300, 20};
  const std::vector<double> obs{12, 60, 200, 30};
  const std::vector<Band> bands{Band::Short, Band::Medium, Band::Long, Band::Short};
  const BandMetrics m = band_metrics(pred, obs, bands);
  ASSERT_TRUE(m.per_band[0]);
  EXPECT_EQ(m.per_band[0]->n, 2u);
  EXPECT_DOUBLE_EQ(m.per_band[0]->mae, 6.0);
  EXPECT_DOUBLE_EQ(m.per_band[2]->mae, 100.0);
  EXPECT_DOUBLE_EQ(m.overall.mae, (2.0 + 10.0 + 100.0 + 10.0) / 4.0);
  const std::vector<Band> all_short(4, Band::Short);
  EXPECT_FALSE(band_metrics(pred, obs, all_short).per_band[2].has_value());
  EXPECT_THROW(band_metrics(pred, obs, std::vector<Band>(3, Band::Short)), InvalidArgument);
}
