#pragma once

// The full framework: preprocessing, band classifier, band-routed
// regressors, evaluation, the framework comparison and persistence.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "incidur/blend.hpp"
#include "incidur/clustering.hpp"
#include "incidur/domain.hpp"
#include "incidur/enrichment.hpp"
#include "incidur/metrics.hpp"
#include "incidur/model.hpp"
#include "incidur/preprocess.hpp"
#include "incidur/report.hpp"

namespace incidur {

inline constexpr std::uint32_t kArtifactVersion = 1;

ModelParams default_classifier_params();
ModelParams default_regressor_params();

struct PipelineConfig {
  // FS2 trains an FS1 stage as well, for records without responder details.
  FeatureSetKind feature_set = FeatureSetKind::FS2_Full;
  SplitSpec split;
  std::uint64_t seed = 42;
  double correlation_threshold = 0.4;
  bool smote = true;
  int smote_k = 5;
  // Share of the training split held out to fit blend meta-learners.
  double blend_holdout_fraction = 0.2;
  bool retrain_on_union = true;
  std::vector<std::string> classifier_models{"rf", "extra_trees", "gbm_leaf"};
  std::array<std::vector<std::string>, 3> band_models{{{"rf", "gbm_ts"}, {"rf", "huber"}, {"gbm_level"}}};
  ModelParams classifier_params = default_classifier_params();
  ModelParams regressor_params = default_regressor_params();
  std::string version = "incidur-1";

  void validate() const;
};

// A single model or a blend of several.
class Predictor {
 public:
  Predictor() = default;
  explicit Predictor(TrainedModel m) : impl_(std::move(m)) {}
  explicit Predictor(BlendedModel m) : impl_(std::move(m)) {}

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
  std::vector<std::string> members() const;
  bool is_blend() const { return std::holds_alternative<BlendedModel>(impl_); }

  void save(BinaryWriter& w) const;
  static Predictor load(BinaryReader& r);

 private:
  std::variant<TrainedModel, BlendedModel> impl_;
};

// Fits `ids` as a single model (one id) or a blend; `resampler` applies to
// every base training set.
Predictor fit_predictor(const std::vector<std::string>& ids, const FeatureMatrix& fit, const Target& y_fit,
                        const FeatureMatrix& holdout, const Target& y_holdout, const ModelParams& params,
                        bool retrain_on_union, const Resampler& resampler = {});

// Everything needed to score records with one feature set.
struct Stage {
  FeatureSetKind kind = FeatureSetKind::FS1_Basic;
  EncoderSchema schema;
  Imputer imputer;
  std::vector<std::size_t> kept;  // encoded columns surviving the correlation filter
  std::vector<std::string> dropped;
  Predictor classifier;
  std::array<Predictor, 3> regressors;  // by band, on the Box-Cox scale

  // Encode, impute and select the kept columns.
  FeatureMatrix prepare(std::span<const IncidentRecord> records) const;
};

struct FrameworkModel {
  std::string version;
  std::uint64_t seed = 0;
  BoxCoxTransform boxcox;
  EnrichmentTable enrichment;
  std::vector<Stage> stages;  // FS1 first

  const Stage* stage(FeatureSetKind kind) const;
  // FS2 when the model has it and the record carries responder details.
  const Stage& stage_for(const IncidentRecord& record) const;
  // Inverse Box-Cox, floored at 1 minute.
  double to_minutes(double z) const;
};

struct Prediction {
  Band band = Band::Short;
  std::array<double, 3> probabilities{};
  double duration_minutes = 0.0;
  std::string model_version;
  FeatureSetKind feature_set_used = FeatureSetKind::FS1_Basic;
};

struct TrainingResult {
  FrameworkModel model;
  SplitResult split;
  KeyValues report;
};

// Needs at least 500 labelled records covering all three bands. Without an
// enrichment table one is derived from the training split.
TrainingResult train_framework(std::span<const IncidentRecord> records, const PipelineConfig& config,
                               const EnrichmentTable* enrichment = nullptr);

// Fits one stage on already enriched training records.
Stage fit_stage(FeatureSetKind kind, std::span<const IncidentRecord> train, const BoxCoxTransform& boxcox,
                const PipelineConfig& config);

Prediction predict_incident(const FrameworkModel& model, const IncidentRecord& record);
std::vector<Prediction> predict_incidents(const FrameworkModel& model, std::span<const IncidentRecord> records);

// Stage outputs for a batch: class probabilities and every band regressor's
// prediction in minutes, so routing can be done either way.
struct StageScores {
  Eigen::MatrixXd probabilities;  // n x 3
  Eigen::MatrixXd minutes;        // n x 3, column = regressor band
  std::vector<int> predicted;     // argmax band
};

StageScores score_stage(const FrameworkModel& model, const Stage& stage, std::span<const IncidentRecord> records);

struct BandMetrics {
  std::array<std::optional<RegressionMetrics>, 3> per_band;  // empty when no record has that true band
  RegressionMetrics overall;
};

BandMetrics band_metrics(std::span<const double> predicted_minutes, std::span<const double> observed_minutes,
                         std::span<const Band> true_bands);

struct FrameworkEvaluation {
  ConfusionMatrix confusion;
  ClassScores scores;
  MulticlassAuc auc;
  BandMetrics routed_by_prediction;  // misrouting counted, as in deployment
  BandMetrics routed_by_truth;       // oracle routing

  KeyValues to_report() const;
};

// With `stage` set, every record is scored with that feature set.
FrameworkEvaluation evaluate_framework(const FrameworkModel& model, std::span<const IncidentRecord> records,
                                       std::optional<FeatureSetKind> stage = std::nullopt);

// ---------------------------------------------------------------------------
// Comparison harness

inline constexpr std::array<std::string_view, 7> kComparisonRows{
    "Unsup", "Sup_MC", "Tobit_MC", "With_class", "Without_class", "Tobit_With_class", "Tobit_Without_class"};

struct CompareConfig {
  PipelineConfig pipeline;
  int clusters = 4;
  int elbow_k_max = 8;
  std::size_t silhouette_sample = 1000;
  // Fit the Tobit rows on minutes (censored below at 1) instead of the
  // Box-Cox scale.
  bool tobit_raw_minutes = false;
};

struct ComparisonCell {
  std::array<std::optional<double>, 3> band_mae;
  double overall_mae = 0.0;
};

struct ComparisonBlock {
  FeatureSetKind feature_set;
  std::string split;  // "test" or "validation"
  std::array<ComparisonCell, kComparisonRows.size()> rows;
  double auc = 0.0;
  std::array<std::size_t, 3> band_counts{};

  const ComparisonCell& row(std::string_view name) const;
};

struct ClusterDiagnostics {
  FeatureSetKind feature_set;
  std::vector<ElbowPoint> elbow;
  int elbow_k = 0;
  std::vector<std::pair<int, double>> silhouette;  // standardised space
  int silhouette_k = 0;
  double silhouette_standardized = 0.0;  // at the configured k
  double silhouette_raw = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonBlock> blocks;  // fs1 test, fs1 validation, fs2 test, fs2 validation
  std::vector<ClusterDiagnostics> clusters;

  const ComparisonBlock& block(FeatureSetKind fs, std::string_view split) const;
  KeyValues to_report() const;
};

ComparisonReport compare_frameworks(std::span<const IncidentRecord> records, const CompareConfig& config,
                                    const EnrichmentTable* enrichment = nullptr);

// ---------------------------------------------------------------------------
// Persistence

// Magic, format version, FNV-1a checksum and length, then named sections.
std::string serialize_model(const FrameworkModel& model);
FrameworkModel deserialize_model(std::string_view bytes);
void save_model(const FrameworkModel& model, const std::filesystem::path& path);
FrameworkModel load_model(const std::filesystem::path& path);

}  // namespace incidur
