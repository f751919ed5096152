#include "incidur/model.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "incidur/error.hpp"

namespace incidur {

namespace {

constexpr std::array<std::string_view, 10> kIds{"rf",   "extra_trees", "gbm_leaf", "gbm_level", "gbm_ts",
                                                 "cart", "ols",         "huber",    "tobit",     "logistic"};

enum class Tag : std::uint8_t { forest, gbm, tree, linear, ovr };

}  // namespace

std::span<const std::string_view> model_ids() { return kIds; }

bool supports(std::string_view id, Task task) {
  if (id == "ols" || id == "huber" || id == "tobit") return task == Task::regression;
  if (id == "logistic") return task == Task::classification;
  return std::find(kIds.begin(), kIds.end(), id) != kIds.end();
}

Eigen::MatrixXd OvrLogistic::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd p(x.rows(), static_cast<Eigen::Index>(per_class.size()));
  for (std::size_t k = 0; k < per_class.size(); ++k) p.col(static_cast<Eigen::Index>(k)) = per_class[k].predict(x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

OvrLogistic OvrLogistic::fit(const Eigen::MatrixXd& x, const Target& target) {
  check_target(target, x.rows());
  OvrLogistic m;
  for (int k = 0; k < target.n_classes; ++k) {
    const Eigen::VectorXd y = (target.values.array() == static_cast<double>(k)).cast<double>().matrix();
    m.per_class.push_back(logistic_fit(x, y));
  }
  return m;
}

void check_columns(const std::vector<std::string>& expected, const std::vector<std::string>& actual) {
  if (expected == actual) return;
  const std::set<std::string> e(expected.begin(), expected.end());
  const std::set<std::string> a(actual.begin(), actual.end());
  std::string missing;
  std::string extra;
  for (const auto& c : e)
    if (!a.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  for (const auto& c : a)
    if (!e.count(c)) extra += (extra.empty() ? "" : ", ") + c;
  std::string msg = "column mismatch";
  if (!missing.empty()) msg += "; missing: " + missing;
  if (!extra.empty()) msg += "; extra: " + extra;
  if (missing.empty() && extra.empty()) msg += "; same columns in a different order";
  throw SchemaMismatch(msg);
}

TrainedModel::TrainedModel(std::string id, Task task, int output_dim, std::vector<std::string> features, Impl impl)
    : id_(std::move(id)), task_(task), output_dim_(output_dim), features_(std::move(features)), impl_(std::move(impl)) {}

Eigen::MatrixXd TrainedModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(features_.size()))
    throw SchemaMismatch("model " + id_ + " expects " + std::to_string(features_.size()) + " columns, got " +
                         std::to_string(x.cols()));
  return std::visit([&](const auto& m) -> Eigen::MatrixXd { return m.predict(x); }, impl_);
}

Eigen::MatrixXd TrainedModel::predict(const FeatureMatrix& matrix) const {
  check_columns(features_, matrix.column_names());
  return predict(matrix.values);
}

void TrainedModel::save(BinaryWriter& w) const {
  w.str(id_);
  w.u8(static_cast<std::uint8_t>(task_));
  w.i32(output_dim_);
  w.strs(features_);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ForestModel>) {
          w.u8(static_cast<std::uint8_t>(Tag::forest));
          m.save(w);
        } else if constexpr (std::is_same_v<M, GbmModel>) {
          w.u8(static_cast<std::uint8_t>(Tag::gbm));
          m.save(w);
        } else if constexpr (std::is_same_v<M, TreeModel>) {
          w.u8(static_cast<std::uint8_t>(Tag::tree));
          m.save(w);
        } else if constexpr (std::is_same_v<M, LinearModel>) {
          w.u8(static_cast<std::uint8_t>(Tag::linear));
          m.save(w);
        } else {
          w.u8(static_cast<std::uint8_t>(Tag::ovr));
          w.u64(m.per_class.size());
          for (const auto& c : m.per_class) c.save(w);
        }
      },
      impl_);
}

TrainedModel TrainedModel::load(BinaryReader& r) {
  std::string id = r.str();
  const auto task = static_cast<Task>(r.u8());
  const int dim = r.i32();
  auto features = r.strs();
  Impl impl;
  switch (static_cast<Tag>(r.u8())) {
    case Tag::forest:
      impl = ForestModel::load(r);
      break;
    case Tag::gbm:
      impl = GbmModel::load(r);
      break;
    case Tag::tree:
      impl = TreeModel::load(r);
      break;
    case Tag::linear:
      impl = LinearModel::load(r);
      break;
    case Tag::ovr: {
      OvrLogistic o;
      const std::size_t n = r.count(1);
      for (std::size_t i = 0; i < n; ++i) o.per_class.push_back(LinearModel::load(r));
      impl = std::move(o);
      break;
    }
    default:
      throw ArtifactError("unknown model kind for " + id);
  }
  return TrainedModel(std::move(id), task, dim, std::move(features), std::move(impl));
}

TrainedModel fit_model(std::string_view id, const FeatureMatrix& matrix, const Target& target,
                       const ModelParams& params) {
  if (std::find(kIds.begin(), kIds.end(), id) == kIds.end())
    throw InvalidArgument("unknown model id '" + std::string(id) + "'");
  if (!supports(id, target.task))
    throw InvalidArgument("model " + std::string(id) + " does not support " + std::string(task_name(target.task)));
  const int dim = target.output_dim();
  const auto wrap = [&](TrainedModel::Impl impl) {
    return TrainedModel(std::string(id), target.task, dim, matrix.column_names(), std::move(impl));
  };

  if (id == "rf" || id == "extra_trees" || id == "cart") {
    ForestConfig cfg = params.forest;
    cfg.seed = params.seed;
    if (id == "cart") return wrap(cart_fit(matrix, target, cfg));
    return wrap(forest_fit(matrix, target, cfg, id == "rf" ? ForestMode::rf : ForestMode::extra_trees));
  }
  if (id.starts_with("gbm_")) {
    GbmConfig cfg = params.gbm;
    cfg.seed = params.seed;
    cfg.loss = target.task == Task::classification ? Loss::logistic : Loss::squared;
    cfg.growth = id == "gbm_level" ? Growth::level_wise : Growth::leaf_wise;
    cfg.categorical_encoding =
        id == "gbm_ts" ? CategoricalEncoding::target_statistic : CategoricalEncoding::onehot_passthrough;
    return wrap(gbm_fit(matrix, target, cfg));
  }
  if (id == "logistic") {
    check_finite(matrix.values);
    OvrLogistic o = OvrLogistic::fit(matrix.values, target);
    for (auto& m : o.per_class) m.features = matrix.column_names();
    return wrap(std::move(o));
  }
  check_target(target, matrix.rows());
  if (id == "ols") return wrap(ols_fit(matrix, target.values));
  if (id == "huber") return wrap(huber_fit(matrix, target.values, params.huber_delta));
  return wrap(tobit_fit(matrix, target.values, params.tobit_limits));
}

}  // namespace incidur
