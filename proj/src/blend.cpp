#include "incidur/blend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "incidur/error.hpp"
#include "incidur/metrics.hpp"

namespace incidur {

namespace {

Eigen::MatrixXd hstack(const std::vector<Eigen::MatrixXd>& blocks, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return out;
}

std::vector<int> int_labels(const Target& t) {
  std::vector<int> out(static_cast<std::size_t>(t.values.size()));
  for (Eigen::Index i = 0; i < t.values.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(t.values(i));
  return out;
}

std::pair<FeatureMatrix, Target> resample(const Resampler& r, const FeatureMatrix& m, const Target& t) {
  if (!r) return {m, t};
  return r(m, t);
}

}  // namespace

Eigen::MatrixXd BlendedModel::base_outputs(const Eigen::MatrixXd& x) const {
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& b : bases) blocks.push_back(b.predict(x));
  return hstack(blocks, x.rows());
}

Eigen::MatrixXd BlendedModel::predict(const Eigen::MatrixXd& x) const {
  return apply_meta(meta, task, base_outputs(x));
}

Eigen::MatrixXd BlendedModel::predict(const FeatureMatrix& matrix) const {
  check_columns(features, matrix.column_names());
  return predict(matrix.values);
}

void BlendedModel::save(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(task));
  w.i32(n_classes);
  w.strs(features);
  w.u64(bases.size());
  for (const auto& b : bases) b.save(w);
  w.u64(meta.size());
  for (const auto& m : meta) m.save(w);
}

BlendedModel BlendedModel::load(BinaryReader& r) {
  BlendedModel m;
  m.task = static_cast<Task>(r.u8());
  m.n_classes = r.i32();
  m.features = r.strs();
  const std::size_t nb = r.count(1);
  for (std::size_t i = 0; i < nb; ++i) m.bases.push_back(TrainedModel::load(r));
  const std::size_t nm = r.count(1);
  for (std::size_t i = 0; i < nm; ++i) m.meta.push_back(LinearModel::load(r));
  Eigen::Index width = 0;
  for (const auto& b : m.bases) width += b.output_dim();
  const std::size_t expected_meta = m.task == Task::classification ? static_cast<std::size_t>(m.n_classes) : 1;
  if (m.bases.empty() || m.meta.size() != expected_meta) throw ArtifactError("blend section malformed");
  for (const auto& lm : m.meta)
    if (lm.weights.size() != width) throw ArtifactError("blend meta width does not match its bases");
  return m;
}

std::vector<LinearModel> fit_meta(const Eigen::MatrixXd& base_outputs, const Target& target) {
  check_target(target, base_outputs.rows());
  if (target.task == Task::regression) return {ols_fit(base_outputs, target.values)};
  std::vector<LinearModel> meta;
  for (int k = 0; k < target.n_classes; ++k) {
    const Eigen::VectorXd y = (target.values.array() == static_cast<double>(k)).cast<double>().matrix();
    const double count = y.sum();
    if (count == 0.0 || count == static_cast<double>(y.size()))
      throw InvalidArgument("blend holdout is degenerate: class " + std::to_string(k) +
                            (count == 0.0 ? " is absent" : " is the only class"));
    meta.push_back(logistic_fit(base_outputs, y));
  }
  return meta;
}

Eigen::MatrixXd apply_meta(const std::vector<LinearModel>& meta, Task task, const Eigen::MatrixXd& base_outputs) {
  if (task == Task::regression) return meta.at(0).predict(base_outputs);
  Eigen::MatrixXd p(base_outputs.rows(), static_cast<Eigen::Index>(meta.size()));
  for (std::size_t k = 0; k < meta.size(); ++k) p.col(static_cast<Eigen::Index>(k)) = meta[k].predict(base_outputs);
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

BlendedModel blend_fit(const FeatureMatrix& train, const Target& y_train, const FeatureMatrix& holdout,
                       const Target& y_holdout, const BlendSpec& spec, const ModelParams& params,
                       const Resampler& resampler) {
  if (spec.base_ids.empty()) throw InvalidArgument("blend needs at least one base model");
  if (train.column_names() != holdout.column_names()) throw SchemaMismatch("blend train and holdout schemas differ");
  if (y_train.task != y_holdout.task || y_train.n_classes != y_holdout.n_classes)
    throw InvalidArgument("blend train and holdout targets differ in kind");
  const auto min_holdout = static_cast<Eigen::Index>(10 * spec.base_ids.size());
  if (holdout.rows() < min_holdout)
    throw InvalidArgument("blend holdout has " + std::to_string(holdout.rows()) + " rows; need at least " +
                          std::to_string(min_holdout));

  BlendedModel model;
  model.task = y_train.task;
  model.n_classes = y_train.output_dim();
  model.features = train.column_names();

  const auto [tr_x, tr_y] = resample(resampler, train, y_train);
  for (const auto& id : spec.base_ids) model.bases.push_back(fit_model(id, tr_x, tr_y, params));
  model.meta = fit_meta(model.base_outputs(holdout.values), y_holdout);

  if (spec.retrain_on_union) {
    FeatureMatrix all = vstack(train, holdout);
    Target y_all = y_train;
    y_all.values.resize(train.rows() + holdout.rows());
    y_all.values << y_train.values, y_holdout.values;
    all.target.reset();
    const auto [u_x, u_y] = resample(resampler, all, y_all);
    for (std::size_t i = 0; i < spec.base_ids.size(); ++i) model.bases[i] = fit_model(spec.base_ids[i], u_x, u_y, params);
  }
  return model;
}

double blend_score(const Eigen::MatrixXd& predictions, const Target& target) {
  if (target.task == Task::classification) return multiclass_auc(predictions, int_labels(target)).macro;
  std::vector<double> p(predictions.col(0).data(), predictions.col(0).data() + predictions.rows());
  std::vector<double> o(target.values.data(), target.values.data() + target.values.size());
  return -regression_metrics(p, o).mae;
}

SweepResult blend_sweep(const FeatureMatrix& train, const Target& y_train, const FeatureMatrix& holdout,
                        const Target& y_holdout, const FeatureMatrix& eval, const Target& y_eval,
                        const std::vector<std::string>& candidates, const ModelParams& params,
                        const Resampler& resampler) {
  if (candidates.empty()) throw InvalidArgument("blend sweep needs candidates");
  const auto [tr_x, tr_y] = resample(resampler, train, y_train);
  struct Fitted {
    std::string id;
    Eigen::MatrixXd on_holdout;
    Eigen::MatrixXd on_eval;
    double holdout_score;
  };
  std::vector<Fitted> fitted;
  for (const auto& id : candidates) {
    const TrainedModel m = fit_model(id, tr_x, tr_y, params);
    Fitted f{id, m.predict(holdout.values), m.predict(eval.values), 0.0};
    f.holdout_score = blend_score(f.on_holdout, y_holdout);
    fitted.push_back(std::move(f));
  }
  std::stable_sort(fitted.begin(), fitted.end(),
                   [](const Fitted& a, const Fitted& b) { return a.holdout_score > b.holdout_score; });

  SweepResult out;
  for (const auto& f : fitted) out.singles.push_back({f.id, {f.id}, blend_score(f.on_eval, y_eval)});
  const std::size_t k_max = std::min<std::size_t>(5, fitted.size());
  for (std::size_t k = 2; k <= k_max; ++k) {
    std::vector<Eigen::MatrixXd> h;
    std::vector<Eigen::MatrixXd> e;
    SweepEntry entry;
    entry.name = "top" + std::to_string(k);
    for (std::size_t i = 0; i < k; ++i) {
      h.push_back(fitted[i].on_holdout);
      e.push_back(fitted[i].on_eval);
      entry.members.push_back(fitted[i].id);
    }
    const auto meta = fit_meta(hstack(h, holdout.rows()), y_holdout);
    entry.score = blend_score(apply_meta(meta, y_train.task, hstack(e, eval.rows())), y_eval);
    out.blends.push_back(std::move(entry));
  }
  out.best = out.singles.front();
  for (const auto& s : out.singles)
    if (s.score > out.best.score) out.best = s;
  for (const auto& b : out.blends)
    if (b.score > out.best.score) out.best = b;
  return out;
}

}  // namespace incidur
