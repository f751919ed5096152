#include "incidur/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

#include "incidur/error.hpp"
#include "incidur/random.hpp"

namespace incidur {

namespace {

constexpr std::string_view kMagic{"INCIDUR\x01", 8};
constexpr std::array<std::string_view, 3> kBandKeys{"short", "medium", "long"};

// Seed streams; keep stable so artifacts stay reproducible.
enum Stream : std::uint64_t { inner_split = 1, classifier = 2, smote_rng = 3, regressor = 4, compare = 5 };

std::uint64_t stage_seed(std::uint64_t seed, FeatureSetKind kind, Stream s, std::uint64_t extra = 0) {
  return mix_seed(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(kind)), s), extra);
}

std::vector<Eigen::Index> as_rows(std::span<const std::size_t> idx) {
  return std::vector<Eigen::Index>(idx.begin(), idx.end());
}

Target band_target(std::span<const Band> bands) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(bands.size()));
  for (std::size_t i = 0; i < bands.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>(bands[i]);
  return Target::classes(std::move(v), kBandCount);
}

Target subset(const Target& t, std::span<const std::size_t> idx) {
  Target out = t;
  out.values.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.values(static_cast<Eigen::Index>(i)) = t.values(static_cast<Eigen::Index>(idx[i]));
  return out;
}

int argmax_row(const Eigen::MatrixXd& p, Eigen::Index i) {
  int best = 0;
  for (Eigen::Index c = 1; c < p.cols(); ++c)
    if (p(i, c) > p(i, best)) best = static_cast<int>(c);
  return best;
}

std::vector<IncidentRecord> enrich_all(const EnrichmentTable& table, std::span<const IncidentRecord> records) {
  std::vector<IncidentRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(table.enrich(r));
  return out;
}

void require_labels(std::span<const IncidentRecord> records) {
  for (const auto& r : records)
    if (!r.duration_minutes)
      throw DataError("record " + (r.id.empty() ? std::string("(no id)") : "'" + r.id + "'") +
                      " has no duration_minutes");
}

Resampler smote_resampler(int k, std::uint64_t seed) {
  return [k, seed](const FeatureMatrix& m, const Target& t) {
    FeatureMatrix in = m;
    in.target = t.values;
    FeatureMatrix out = smote(in, k, seed);
    Target y = Target::classes(*out.target, t.n_classes);
    out.target.reset();
    return std::make_pair(std::move(out), std::move(y));
  };
}

std::string fs_key(FeatureSetKind k) { return k == FeatureSetKind::FS1_Basic ? "fs1" : "fs2"; }

// ---- schema serialisation

void save_schema(BinaryWriter& w, const EncoderSchema& s) {
  w.u8(static_cast<std::uint8_t>(s.feature_set().kind));
  w.strs(s.feature_set().columns);
  w.u64(s.sources().size());
  for (const auto& src : s.sources()) {
    w.str(src.feature);
    w.u8(static_cast<std::uint8_t>(src.kind));
    w.u64(src.codes.size());
    for (int c : src.codes) w.i32(c);
    w.strs(src.labels);
  }
}

EncoderSchema load_schema(BinaryReader& r) {
  FeatureSet fs;
  fs.kind = static_cast<FeatureSetKind>(r.u8());
  fs.columns = r.strs();
  const std::size_t n = r.count(1);
  std::vector<SourceEncoding> sources;
  for (std::size_t i = 0; i < n; ++i) {
    SourceEncoding s;
    s.feature = r.str();
    s.kind = static_cast<ColumnKind>(r.u8());
    const std::size_t nc = r.count(4);
    for (std::size_t k = 0; k < nc; ++k) s.codes.push_back(r.i32());
    s.labels = r.strs();
    if (s.labels.size() != s.codes.size()) throw ArtifactError("encoder schema section malformed");
    sources.push_back(std::move(s));
  }
  return EncoderSchema(std::move(fs), std::move(sources));
}

void save_stage(BinaryWriter& w, const Stage& s) {
  w.u8(static_cast<std::uint8_t>(s.kind));
  save_schema(w, s.schema);
  s.imputer.save(w);
  w.u64(s.kept.size());
  for (auto k : s.kept) w.u64(k);
  w.strs(s.dropped);
  s.classifier.save(w);
  for (const auto& r : s.regressors) r.save(w);
}

Stage load_stage(BinaryReader& r) {
  Stage s;
  s.kind = static_cast<FeatureSetKind>(r.u8());
  s.schema = load_schema(r);
  s.imputer = Imputer::load(r);
  const std::size_t nk = r.count(8);
  const std::size_t width = s.schema.columns().size();
  for (std::size_t i = 0; i < nk; ++i) {
    s.kept.push_back(r.u64());
    if (s.kept.back() >= width) throw ArtifactError("stage keeps a column outside its schema");
  }
  s.dropped = r.strs();
  s.classifier = Predictor::load(r);
  for (auto& reg : s.regressors) reg = Predictor::load(r);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

ModelParams default_classifier_params() {
  ModelParams p;
  p.forest.max_features = MaxFeatures::sqrt();
  return p;
}

ModelParams default_regressor_params() {
  ModelParams p;
  p.forest.max_features = MaxFeatures::of(1.0 / 3.0);
  return p;
}

void PipelineConfig::validate() const {
  if (feature_set == FeatureSetKind::Custom) throw InvalidArgument("feature_set must be fs1 or fs2");
  split.validate();
  if (!(correlation_threshold > 0.0 && correlation_threshold <= 1.0))
    throw InvalidArgument("correlation_threshold must be in (0, 1]");
  if (smote_k < 1) throw InvalidArgument("smote_k must be positive");
  if (!(blend_holdout_fraction > 0.0 && blend_holdout_fraction < 1.0))
    throw InvalidArgument("blend_holdout_fraction must be in (0, 1)");
  if (classifier_models.empty()) throw InvalidArgument("classifier needs at least one model");
  for (const auto& id : classifier_models)
    if (!supports(id, Task::classification)) throw InvalidArgument("'" + id + "' is not a classifier");
  for (std::size_t b = 0; b < band_models.size(); ++b) {
    if (band_models[b].empty()) throw InvalidArgument(std::string(kBandKeys[b]) + " band needs a regressor");
    for (const auto& id : band_models[b])
      if (!supports(id, Task::regression)) throw InvalidArgument("'" + id + "' is not a regressor");
  }
  classifier_params.forest.validate();
  regressor_params.forest.validate();
  classifier_params.gbm.validate();
  regressor_params.gbm.validate();
}

// ---------------------------------------------------------------------------
// Predictor

Eigen::MatrixXd Predictor::predict(const Eigen::MatrixXd& x) const {
  return std::visit([&](const auto& m) -> Eigen::MatrixXd { return m.predict(x); }, impl_);
}

std::vector<std::string> Predictor::members() const {
  if (const auto* m = std::get_if<TrainedModel>(&impl_)) return {m->id()};
  std::vector<std::string> out;
  for (const auto& b : std::get<BlendedModel>(impl_).bases) out.push_back(b.id());
  return out;
}

void Predictor::save(BinaryWriter& w) const {
  if (const auto* m = std::get_if<TrainedModel>(&impl_)) {
    w.u8(0);
    m->save(w);
  } else {
    w.u8(1);
    std::get<BlendedModel>(impl_).save(w);
  }
}

Predictor Predictor::load(BinaryReader& r) {
  switch (r.u8()) {
    case 0:
      return Predictor(TrainedModel::load(r));
    case 1:
      return Predictor(BlendedModel::load(r));
    default:
      throw ArtifactError("unknown predictor kind");
  }
}

Predictor fit_predictor(const std::vector<std::string>& ids, const FeatureMatrix& fit, const Target& y_fit,
                        const FeatureMatrix& holdout, const Target& y_holdout, const ModelParams& params,
                        bool retrain_on_union, const Resampler& resampler) {
  if (ids.size() > 1) return Predictor(blend_fit(fit, y_fit, holdout, y_holdout, {ids, retrain_on_union}, params, resampler));
  FeatureMatrix x = fit;
  Target y = y_fit;
  if (retrain_on_union) {
    x = vstack(fit, holdout);
    x.target.reset();
    y.values.resize(fit.rows() + holdout.rows());
    y.values << y_fit.values, y_holdout.values;
  }
  if (resampler) std::tie(x, y) = resampler(x, y);
  return Predictor(fit_model(ids.at(0), x, y, params));
}

// ---------------------------------------------------------------------------
// Stages and framework

FeatureMatrix Stage::prepare(std::span<const IncidentRecord> records) const {
  return imputer.apply(encode(records, schema)).select_columns(kept);
}

const Stage* FrameworkModel::stage(FeatureSetKind kind) const {
  for (const auto& s : stages)
    if (s.kind == kind) return &s;
  return nullptr;
}

const Stage& FrameworkModel::stage_for(const IncidentRecord& record) const {
  if (stages.empty()) throw InvalidArgument("framework model has no stages");
  if (record.responders) {
    if (const Stage* s = stage(FeatureSetKind::FS2_Full)) return *s;
  }
  if (const Stage* s = stage(FeatureSetKind::FS1_Basic)) return *s;
  return stages.front();
}

double FrameworkModel::to_minutes(double z) const {
  const double y = boxcox.inverse(z);
  return std::isnan(y) ? 1.0 : std::max(1.0, y);
}

Stage fit_stage(FeatureSetKind kind, std::span<const IncidentRecord> train, const BoxCoxTransform& boxcox,
                const PipelineConfig& config) {
  Stage stage;
  stage.kind = kind;
  stage.schema = EncoderSchema::fit(train, FeatureSet::of(kind));
  const FeatureMatrix raw = encode(train, stage.schema);
  stage.imputer = Imputer::fit(raw);
  CorrelationFilterResult filtered = correlation_filter(stage.imputer.apply(raw), config.correlation_threshold);
  stage.kept = std::move(filtered.kept);
  stage.dropped = std::move(filtered.dropped);
  const FeatureMatrix& x = filtered.matrix;

  const std::vector<Band> bands = band_vector(train);
  const Target y_cls = band_target(bands);
  const std::array<double, 2> fractions{1.0 - config.blend_holdout_fraction, config.blend_holdout_fraction};
  const auto inner = stratified_partition(bands, fractions, stage_seed(config.seed, kind, inner_split));
  const FeatureMatrix x_fit = x.select_rows(as_rows(inner[0]));
  const FeatureMatrix x_hold = x.select_rows(as_rows(inner[1]));

  ModelParams cp = config.classifier_params;
  cp.seed = stage_seed(config.seed, kind, classifier);
  const Resampler resampler =
      config.smote ? smote_resampler(config.smote_k, stage_seed(config.seed, kind, smote_rng)) : Resampler{};
  stage.classifier = fit_predictor(config.classifier_models, x_fit, subset(y_cls, inner[0]), x_hold,
                                   subset(y_cls, inner[1]), cp, config.retrain_on_union, resampler);

  const Target z = Target::regression(boxcox.apply(duration_vector(train)));
  for (std::size_t b = 0; b < 3; ++b) {
    std::array<std::vector<std::size_t>, 2> part;
    for (std::size_t g = 0; g < 2; ++g)
      for (std::size_t i : inner[g])
        if (static_cast<std::size_t>(bands[i]) == b) part[g].push_back(i);
    ModelParams rp = config.regressor_params;
    rp.seed = stage_seed(config.seed, kind, regressor, b);
    stage.regressors[b] = fit_predictor(config.band_models[b], x.select_rows(as_rows(part[0])), subset(z, part[0]),
                                        x.select_rows(as_rows(part[1])), subset(z, part[1]), rp,
                                        config.retrain_on_union);
  }
  return stage;
}

TrainingResult train_framework(std::span<const IncidentRecord> records, const PipelineConfig& config,
                               const EnrichmentTable* enrichment) {
  config.validate();
  if (records.size() < 500)
    throw DataError("training needs at least 500 records, got " + std::to_string(records.size()));
  require_labels(records);
  for (const auto& r : records) validate(r);
  std::array<std::size_t, 3> counts{};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(band_of(*r.duration_minutes))];
  for (std::size_t b = 0; b < 3; ++b)
    if (counts[b] == 0) throw DataError("no training records in the " + std::string(kBandKeys[b]) + " band");

  TrainingResult result;
  result.split = split(records, config.split);
  FrameworkModel& model = result.model;
  model.version = config.version;
  model.seed = config.seed;
  model.enrichment = enrichment ? *enrichment : EnrichmentTable::derive(result.split.train);
  const auto train = enrich_all(model.enrichment, result.split.train);
  model.boxcox = boxcox_fit(duration_vector(train));
  model.stages.push_back(fit_stage(FeatureSetKind::FS1_Basic, train, model.boxcox, config));
  if (config.feature_set == FeatureSetKind::FS2_Full)
    model.stages.push_back(fit_stage(FeatureSetKind::FS2_Full, train, model.boxcox, config));

  KeyValues& rep = result.report;
  rep.comment("training report");
  rep.set("model_version", model.version);
  rep.set("seed", static_cast<long long>(model.seed));
  rep.set("feature_set", std::string(feature_set_name(config.feature_set)));
  rep.set("records", records.size());
  rep.set("split.train", result.split.train.size());
  rep.set("split.test", result.split.test.size());
  rep.set("split.validation", result.split.validation.size());
  const auto train_bands = band_vector(train);
  for (std::size_t b = 0; b < 3; ++b)
    rep.set("train.band." + std::string(kBandKeys[b]),
            static_cast<std::size_t>(std::count(train_bands.begin(), train_bands.end(), static_cast<Band>(b))));
  rep.set("boxcox.lambda", model.boxcox.lambda());
  rep.set("boxcox.shift", model.boxcox.shift());
  rep.set("skewness.before", skewness(duration_vector(train)));
  rep.set("skewness.after", skewness(model.boxcox.apply(duration_vector(train))));
  rep.set("enrichment.rows", model.enrichment.size());
  for (const auto& s : model.stages) {
    const std::string p = fs_key(s.kind) + ".";
    rep.set(p + "columns", s.kept.size());
    std::string dropped;
    for (const auto& d : s.dropped) dropped += (dropped.empty() ? "" : ",") + d;
    rep.set(p + "dropped", dropped.empty() ? std::string("none") : dropped);
    std::string members;
    for (const auto& m : s.classifier.members()) members += (members.empty() ? "" : "+") + m;
    rep.set(p + "classifier", members);
    for (std::size_t b = 0; b < 3; ++b) {
      std::string reg;
      for (const auto& m : s.regressors[b].members()) reg += (reg.empty() ? "" : "+") + m;
      rep.set(p + "regressor." + std::string(kBandKeys[b]), reg);
    }
  }
  rep.append(evaluate_framework(model, result.split.test).to_report(), "test.");
  rep.append(evaluate_framework(model, result.split.validation).to_report(), "validation.");
  return result;
}

// ---------------------------------------------------------------------------
// Prediction

StageScores score_stage(const FrameworkModel& model, const Stage& stage, std::span<const IncidentRecord> records) {
  const auto enriched = enrich_all(model.enrichment, records);
  const FeatureMatrix x = stage.prepare(enriched);
  StageScores s;
  s.probabilities = stage.classifier.predict(x.values);
  s.minutes.resize(x.rows(), 3);
  for (std::size_t b = 0; b < 3; ++b) {
    const Eigen::MatrixXd z = stage.regressors[b].predict(x.values);
    for (Eigen::Index i = 0; i < x.rows(); ++i) s.minutes(i, static_cast<Eigen::Index>(b)) = model.to_minutes(z(i, 0));
  }
  s.predicted.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) s.predicted[static_cast<std::size_t>(i)] = argmax_row(s.probabilities, i);
  return s;
}

namespace {

// Scores every record with its own stage (or the forced one), keeping input
// order.
struct ScoredBatch {
  StageScores scores;
  std::vector<FeatureSetKind> used;
};

ScoredBatch score_all(const FrameworkModel& model, std::span<const IncidentRecord> records,
                      std::optional<FeatureSetKind> forced) {
  std::map<const Stage*, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Stage* s = nullptr;
    if (forced) {
      s = model.stage(*forced);
      if (!s) throw InvalidArgument("model has no " + std::string(feature_set_name(*forced)) + " stage");
    } else {
      s = &model.stage_for(records[i]);
    }
    groups[s].push_back(i);
  }
  ScoredBatch out;
  const auto n = static_cast<Eigen::Index>(records.size());
  out.scores.probabilities.resize(n, 3);
  out.scores.minutes.resize(n, 3);
  out.scores.predicted.resize(records.size());
  out.used.resize(records.size());
  // Stage order, not pointer order, so the work sequence is reproducible.
  for (const Stage& stage : model.stages) {
    const auto it = groups.find(&stage);
    if (it == groups.end()) continue;
    std::vector<IncidentRecord> batch;
    for (std::size_t i : it->second) batch.push_back(records[i]);
    const StageScores s = score_stage(model, stage, batch);
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(it->second[k]);
      out.scores.probabilities.row(i) = s.probabilities.row(static_cast<Eigen::Index>(k));
      out.scores.minutes.row(i) = s.minutes.row(static_cast<Eigen::Index>(k));
      out.scores.predicted[it->second[k]] = s.predicted[k];
      out.used[it->second[k]] = stage.kind;
    }
  }
  return out;
}

}  // namespace

std::vector<Prediction> predict_incidents(const FrameworkModel& model, std::span<const IncidentRecord> records) {
  for (const auto& r : records) validate(r);
  const ScoredBatch b = score_all(model, records, std::nullopt);
  std::vector<Prediction> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    Prediction& p = out[i];
    const int band = b.scores.predicted[i];
    p.band = static_cast<Band>(band);
    for (int c = 0; c < 3; ++c) p.probabilities[static_cast<std::size_t>(c)] = b.scores.probabilities(row, c);
    p.duration_minutes = b.scores.minutes(row, band);
    p.model_version = model.version;
    p.feature_set_used = b.used[i];
  }
  return out;
}

Prediction predict_incident(const FrameworkModel& model, const IncidentRecord& record) {
  return predict_incidents(model, std::span<const IncidentRecord>(&record, 1)).front();
}

// ---------------------------------------------------------------------------
// Evaluation

BandMetrics band_metrics(std::span<const double> predicted, std::span<const double> observed,
                         std::span<const Band> bands) {
  if (predicted.size() != observed.size() || bands.size() != observed.size())
    throw InvalidArgument("band metrics: length mismatch");
  BandMetrics m;
  m.overall = regression_metrics(predicted, observed);
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> p;
    std::vector<double> o;
    for (std::size_t i = 0; i < bands.size(); ++i)
      if (static_cast<std::size_t>(bands[i]) == b) {
        p.push_back(predicted[i]);
        o.push_back(observed[i]);
      }
    if (!p.empty()) m.per_band[b] = regression_metrics(p, o);
  }
  return m;
}

FrameworkEvaluation evaluate_framework(const FrameworkModel& model, std::span<const IncidentRecord> records,
                                       std::optional<FeatureSetKind> stage) {
  if (records.empty()) throw DataError("no records to evaluate");
  require_labels(records);
  const ScoredBatch b = score_all(model, records, stage);
  const std::vector<Band> bands = band_vector(records);
  std::vector<int> truth(records.size());
  std::vector<double> observed(records.size());
  std::vector<double> by_pred(records.size());
  std::vector<double> by_truth(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    truth[i] = static_cast<int>(bands[i]);
    observed[i] = *records[i].duration_minutes;
    by_pred[i] = b.scores.minutes(row, b.scores.predicted[i]);
    by_truth[i] = b.scores.minutes(row, truth[i]);
  }
  FrameworkEvaluation ev;
  ev.confusion = confusion(b.scores.predicted, truth, {"short", "medium", "long"});
  ev.scores = precision_recall_accuracy(ev.confusion);
  ev.auc = multiclass_auc(b.scores.probabilities, truth);
  ev.routed_by_prediction = band_metrics(by_pred, observed, bands);
  ev.routed_by_truth = band_metrics(by_truth, observed, bands);
  return ev;
}

KeyValues FrameworkEvaluation::to_report() const {
  KeyValues kv;
  kv.set("auc_macro", auc.macro);
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string band(kBandKeys[b]);
    if (b < auc.per_class.size() && auc.per_class[b]) kv.set("auc." + band, *auc.per_class[b]);
    else kv.set("auc." + band, "excluded");
  }
  kv.set("accuracy", scores.accuracy);
  kv.set("macro_precision", scores.macro_precision);
  kv.set("macro_recall", scores.macro_recall);
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string band(kBandKeys[b]);
    kv.set("precision." + band, scores.precision[b]);
    kv.set("recall." + band, scores.recall[b]);
  }
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t o = 0; o < 3; ++o)
      kv.set("confusion." + std::string(kBandKeys[p]) + "." + std::string(kBandKeys[o]),
             static_cast<long long>(confusion.counts(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(o))));
  const auto emit = [&](const std::string& prefix, const BandMetrics& m) {
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string key = prefix + std::string(kBandKeys[b]);
      if (!m.per_band[b]) {
        kv.set(key + ".n", 0);
        continue;
      }
      kv.set(key + ".n", m.per_band[b]->n);
      kv.set(key + ".mae", m.per_band[b]->mae);
      kv.set(key + ".mape", m.per_band[b]->mape);
      kv.set(key + ".rmse", m.per_band[b]->rmse);
    }
    kv.set(prefix + "overall.n", m.overall.n);
    kv.set(prefix + "overall.mae", m.overall.mae);
    kv.set(prefix + "overall.mape", m.overall.mape);
    kv.set(prefix + "overall.rmse", m.overall.rmse);
  };
  emit("routed_by_prediction.", routed_by_prediction);
  emit("routed_by_truth.", routed_by_truth);
  return kv;
}

// ---------------------------------------------------------------------------
// Comparison

const ComparisonCell& ComparisonBlock::row(std::string_view name) const {
  for (std::size_t i = 0; i < kComparisonRows.size(); ++i)
    if (kComparisonRows[i] == name) return rows[i];
  throw InvalidArgument("unknown comparison row '" + std::string(name) + "'");
}

const ComparisonBlock& ComparisonReport::block(FeatureSetKind fs, std::string_view split) const {
  for (const auto& b : blocks)
    if (b.feature_set == fs && b.split == split) return b;
  throw InvalidArgument("no comparison block for " + fs_key(fs) + " " + std::string(split));
}

KeyValues ComparisonReport::to_report() const {
  KeyValues kv;
  kv.comment("framework comparison: MAE in minutes per true band");
  for (const auto& b : blocks) {
    const std::string p = fs_key(b.feature_set) + "." + b.split + ".";
    kv.comment(fs_key(b.feature_set) + " " + b.split);
    kv.set(p + "auc_macro", b.auc);
    for (std::size_t band = 0; band < 3; ++band) kv.set(p + "n." + std::string(kBandKeys[band]), b.band_counts[band]);
    for (std::size_t r = 0; r < kComparisonRows.size(); ++r) {
      const std::string rp = p + std::string(kComparisonRows[r]) + ".";
      for (std::size_t band = 0; band < 3; ++band) {
        const auto& v = b.rows[r].band_mae[band];
        if (v) kv.set(rp + std::string(kBandKeys[band]), *v);
        else kv.set(rp + std::string(kBandKeys[band]), "na");
      }
      kv.set(rp + "overall", b.rows[r].overall_mae);
    }
    const ComparisonCell& with = b.row("With_class");
    const ComparisonCell& without = b.row("Without_class");
    for (std::size_t band = 0; band < 3; ++band) {
      const auto& w = with.band_mae[band];
      const auto& wo = without.band_mae[band];
      const std::string key = p + "reduction_pct." + std::string(kBandKeys[band]);
      if (w && wo && *wo > 0.0) kv.set(key, 100.0 * (*wo - *w) / *wo);
      else kv.set(key, "na");
    }
  }
  for (const auto& c : clusters) {
    const std::string p = fs_key(c.feature_set) + ".clusters.";
    kv.comment(fs_key(c.feature_set) + " clustering");
    for (const auto& e : c.elbow) kv.set(p + "inertia.k" + std::to_string(e.k), e.inertia);
    kv.set(p + "elbow_k", c.elbow_k);
    for (const auto& [k, s] : c.silhouette) kv.set(p + "silhouette.k" + std::to_string(k), s);
    kv.set(p + "silhouette_k", c.silhouette_k);
    kv.set(p + "silhouette_standardized", c.silhouette_standardized);
    kv.set(p + "silhouette_raw", c.silhouette_raw);
  }
  return kv;
}

namespace {

ComparisonCell cell_of(std::span<const double> predicted, std::span<const double> observed,
                       std::span<const Band> bands) {
  const BandMetrics m = band_metrics(predicted, observed, bands);
  ComparisonCell c;
  for (std::size_t b = 0; b < 3; ++b)
    if (m.per_band[b]) c.band_mae[b] = m.per_band[b]->mae;
  c.overall_mae = m.overall.mae;
  return c;
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  Rng rng(seed);
  partial_shuffle(rng, idx, k);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

ComparisonReport compare_frameworks(std::span<const IncidentRecord> records, const CompareConfig& config,
                                    const EnrichmentTable* enrichment) {
  const PipelineConfig& pc = config.pipeline;
  pc.validate();
  if (config.clusters < 1) throw InvalidArgument("cluster count must be positive");
  if (config.elbow_k_max < 3) throw InvalidArgument("elbow scan needs k_max >= 3");
  if (records.size() < 500)
    throw DataError("comparison needs at least 500 records, got " + std::to_string(records.size()));
  require_labels(records);
  for (const auto& r : records) validate(r);

  const SplitResult parts = split(records, pc.split);
  FrameworkModel base;
  base.version = pc.version;
  base.seed = pc.seed;
  base.enrichment = enrichment ? *enrichment : EnrichmentTable::derive(parts.train);
  const auto train = enrich_all(base.enrichment, parts.train);
  const std::array<std::pair<std::string, std::vector<IncidentRecord>>, 2> evals{
      std::make_pair(std::string("test"), enrich_all(base.enrichment, parts.test)),
      std::make_pair(std::string("validation"), enrich_all(base.enrichment, parts.validation))};
  base.boxcox = boxcox_fit(duration_vector(train));
  const std::vector<Band> train_bands = band_vector(train);
  const Target z_train = Target::regression(base.boxcox.apply(duration_vector(train)));
  const bool raw = config.tobit_raw_minutes;
  const Target tobit_target = raw ? Target::regression(duration_vector(train)) : z_train;
  TobitLimits limits;
  limits.lower = raw ? 1.0 : base.boxcox.apply(1.0);

  ComparisonReport report;
  for (FeatureSetKind fs : {FeatureSetKind::FS1_Basic, FeatureSetKind::FS2_Full}) {
    FrameworkModel model = base;
    model.stages.push_back(fit_stage(fs, train, model.boxcox, pc));
    const Stage& stage = model.stages.back();
    const FeatureMatrix x_train = stage.prepare(train);

    // Per-band Tobit and the single-model baselines on the whole training split.
    ModelParams rp = pc.regressor_params;
    rp.seed = stage_seed(pc.seed, fs, compare);
    rp.tobit_limits = limits;
    std::array<TrainedModel, 3> tobit_band;
    for (std::size_t b = 0; b < 3; ++b) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < train_bands.size(); ++i)
        if (static_cast<std::size_t>(train_bands[i]) == b) rows.push_back(i);
      tobit_band[b] = fit_model("tobit", x_train.select_rows(as_rows(rows)), subset(tobit_target, rows), rp);
    }
    const TrainedModel rf_all = fit_model("rf", x_train, z_train, rp);
    const TrainedModel tobit_all = fit_model("tobit", x_train, tobit_target, rp);

    // Unsupervised: k-means on scaled features, one rf per cluster.
    const ClusterScaler scaler = ClusterScaler::fit(x_train);
    const Eigen::MatrixXd scaled = scaler.apply(x_train.values);
    const std::uint64_t cseed = stage_seed(pc.seed, fs, compare, 1);
    const KMeansModel km = kmeans_fit(scaled, config.clusters, cseed);
    std::vector<std::optional<TrainedModel>> cluster_rf(static_cast<std::size_t>(config.clusters));
    for (int c = 0; c < config.clusters; ++c) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < km.assignments.size(); ++i)
        if (km.assignments[i] == c) rows.push_back(i);
      // Tiny clusters fall back to the global model.
      if (rows.size() >= 4 * static_cast<std::size_t>(rp.forest.min_samples_leaf))
        cluster_rf[static_cast<std::size_t>(c)] = fit_model("rf", x_train.select_rows(as_rows(rows)), subset(z_train, rows), rp);
    }

    ClusterDiagnostics diag;
    diag.feature_set = fs;
    diag.elbow = elbow_scan(scaled, 1, std::min<int>(config.elbow_k_max + 1, static_cast<int>(scaled.rows())), cseed);
    diag.elbow_k = elbow_k(diag.elbow);
    const auto sample = sample_rows(static_cast<std::size_t>(scaled.rows()), config.silhouette_sample, cseed);
    const Eigen::MatrixXd s_scaled = x_train.values(as_rows(sample), Eigen::all);
    const Eigen::MatrixXd s_std = scaled(as_rows(sample), Eigen::all);
    double best = -2.0;
    for (int k = 2; k <= config.elbow_k_max && k <= static_cast<int>(sample.size()) - 1; ++k) {
      const KMeansModel m = kmeans_fit(scaled, k, cseed);
      std::vector<int> a;
      for (std::size_t i : sample) a.push_back(m.assignments[i]);
      if (std::set<int>(a.begin(), a.end()).size() < 2) continue;
      const double s = silhouette(s_std, a);
      diag.silhouette.emplace_back(k, s);
      if (s > best) {
        best = s;
        diag.silhouette_k = k;
      }
      if (k == config.clusters) {
        diag.silhouette_standardized = s;
        diag.silhouette_raw = silhouette(s_scaled, a);
      }
    }
    report.clusters.push_back(std::move(diag));

    for (const auto& [split_name, recs] : evals) {
      const StageScores sc = score_stage(model, stage, recs);
      const FeatureMatrix x = stage.prepare(recs);
      const std::vector<Band> bands = band_vector(recs);
      const std::size_t n = recs.size();
      std::vector<double> observed(n);
      std::vector<int> truth(n);
      for (std::size_t i = 0; i < n; ++i) {
        observed[i] = *recs[i].duration_minutes;
        truth[i] = static_cast<int>(bands[i]);
      }
      const auto minutes_of = [&](const Eigen::MatrixXd& z, Eigen::Index i) { return model.to_minutes(z(i, 0)); };
      const auto tobit_minutes = [&](const Eigen::MatrixXd& z, Eigen::Index i) {
        return raw ? std::max(1.0, z(i, 0)) : model.to_minutes(z(i, 0));
      };
      std::array<Eigen::MatrixXd, 3> tob;
      for (std::size_t b = 0; b < 3; ++b) tob[b] = tobit_band[b].predict(x.values);
      const Eigen::MatrixXd rf_z = rf_all.predict(x.values);
      const Eigen::MatrixXd tobit_z = tobit_all.predict(x.values);
      const std::vector<int> cluster = km.assign(scaler.apply(x.values));
      std::vector<Eigen::MatrixXd> cz(static_cast<std::size_t>(config.clusters));
      for (int c = 0; c < config.clusters; ++c) {
        const auto& m = cluster_rf[static_cast<std::size_t>(c)];
        cz[static_cast<std::size_t>(c)] = m ? m->predict(x.values) : rf_z;
      }

      std::array<std::vector<double>, kComparisonRows.size()> pred;
      for (auto& p : pred) p.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int pb = sc.predicted[i];
        const int tb = truth[i];
        pred[0][i] = minutes_of(cz[static_cast<std::size_t>(cluster[i])], row);
        pred[1][i] = sc.minutes(row, pb);
        pred[2][i] = tobit_minutes(tob[static_cast<std::size_t>(pb)], row);
        pred[3][i] = sc.minutes(row, tb);
        pred[4][i] = minutes_of(rf_z, row);
        pred[5][i] = tobit_minutes(tob[static_cast<std::size_t>(tb)], row);
        pred[6][i] = tobit_minutes(tobit_z, row);
      }
      ComparisonBlock block;
      block.feature_set = fs;
      block.split = split_name;
      for (std::size_t r = 0; r < kComparisonRows.size(); ++r) block.rows[r] = cell_of(pred[r], observed, bands);
      block.auc = multiclass_auc(sc.probabilities, truth).macro;
      for (Band b : bands) ++block.band_counts[static_cast<std::size_t>(b)];
      report.blocks.push_back(std::move(block));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

std::string serialize_model(const FrameworkModel& model) {
  std::vector<std::pair<std::string, std::string>> sections;
  {
    BinaryWriter w;
    w.str(model.version);
    w.u64(model.seed);
    w.u64(model.stages.size());
    sections.emplace_back("meta", w.take());
  }
  {
    BinaryWriter w;
    model.boxcox.save(w);
    sections.emplace_back("boxcox", w.take());
  }
  {
    BinaryWriter w;
    model.enrichment.save(w);
    sections.emplace_back("enrichment", w.take());
  }
  for (const auto& s : model.stages) {
    BinaryWriter w;
    save_stage(w, s);
    sections.emplace_back("stage." + fs_key(s.kind), w.take());
  }
  BinaryWriter payload;
  payload.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, body] : sections) {
    payload.str(name);
    payload.u64(body.size());
    payload.bytes(body);
  }
  BinaryWriter out;
  out.bytes(kMagic);
  out.u32(kArtifactVersion);
  out.u64(fnv1a64(payload.data()));
  out.u64(payload.data().size());
  out.bytes(payload.data());
  return out.take();
}

FrameworkModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
    throw ArtifactError("not an incidur model artifact (bad magic)");
  BinaryReader head(bytes.substr(kMagic.size()));
  const std::uint32_t version = head.u32();
  if (version != kArtifactVersion)
    throw UnsupportedVersion("artifact format version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kArtifactVersion) + ")");
  const std::uint64_t checksum = head.u64();
  const std::uint64_t length = head.u64();
  if (length != head.remaining())
    throw ChecksumMismatch("artifact length " + std::to_string(head.remaining()) + " does not match header " +
                           std::to_string(length) + "; the file is truncated or corrupt");
  const std::string_view payload = head.bytes(length);
  if (fnv1a64(payload) != checksum) throw ChecksumMismatch("artifact checksum mismatch; the file is corrupt");

  BinaryReader r(payload);
  std::map<std::string, std::string_view> sections;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint64_t size = r.u64();
    sections[std::move(name)] = r.bytes(size);
  }
  if (!r.done()) throw ArtifactError("trailing bytes after the last section");
  const auto section = [&](const std::string& name) {
    const auto it = sections.find(name);
    if (it == sections.end()) throw ArtifactError("artifact has no '" + name + "' section");
    return BinaryReader(it->second);
  };

  FrameworkModel m;
  auto meta = section("meta");
  m.version = meta.str();
  m.seed = meta.u64();
  const std::uint64_t n_stages = meta.u64();
  auto bc = section("boxcox");
  m.boxcox = BoxCoxTransform::load(bc);
  auto en = section("enrichment");
  m.enrichment = EnrichmentTable::load(en);
  for (FeatureSetKind k : {FeatureSetKind::FS1_Basic, FeatureSetKind::FS2_Full}) {
    const std::string name = "stage." + fs_key(k);
    if (!sections.count(name)) continue;
    auto sr = section(name);
    m.stages.push_back(load_stage(sr));
    if (m.stages.back().kind != k) throw ArtifactError("section " + name + " holds the wrong stage");
  }
  if (m.stages.empty() || m.stages.size() != n_stages) throw ArtifactError("artifact stage count mismatch");
  return m;
}

void save_model(const FrameworkModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write model to " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model to " + path.string());
}

FrameworkModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes);
}

}  // namespace incidur
